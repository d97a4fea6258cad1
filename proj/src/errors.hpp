#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace riskdiff {

// Error taxonomy shared by all modules. The C API maps each class onto a
// status code (see capi.cpp).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParameterError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class FitError : public Error {
public:
    FitError(const std::string& what, double condition = 0.0)
        : Error(what), condition_(condition) {}
    double condition() const { return condition_; }

private:
    double condition_;
};

class StateError : public Error {
public:
    using Error::Error;
};

class TrainingDiverged : public Error {
public:
    TrainingDiverged(const std::string& what, std::size_t step)
        : Error(what), step_(step) {}
    std::size_t step() const { return step_; }

private:
    std::size_t step_;
};

class SolverError : public Error {
public:
    SolverError(const std::string& what, std::size_t step)
        : Error(what), step_(step) {}
    std::size_t step() const { return step_; }

private:
    std::size_t step_;
};

class SizeError : public Error {
public:
    using Error::Error;
};

class RadiusTooSmall : public Error {
public:
    using Error::Error;
};

class InversionError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace riskdiff
