#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "model.hpp"

namespace riskdiff {

enum class RegressorKind { Poly, Net, Table };

const char* regressor_kind_name(RegressorKind kind);
RegressorKind parse_regressor_kind(const std::string& s);

// Affine standardization frozen at fit time. Coordinates with (numerically)
// zero spread are marked inactive and mapped to 0.
struct Standardizer {
    std::array<double, 2> mean{0.0, 0.0};
    std::array<double, 2> scale{1.0, 1.0};
    std::array<bool, 2> active{true, true};

    static Standardizer fit(const Matrix& inputs);
    double apply(int coord, double x) const {
        return active[coord] ? (x - mean[coord]) / scale[coord] : 0.0;
    }
};

struct NetConfig {
    std::vector<int> hidden{32, 32};
    std::size_t epochs_first = 1000;
    std::size_t epochs_last = 300;
    std::size_t last_steps = 5;
    std::size_t batch_size = 1100;
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 1234;
    bool warm_start = true;
    // After the optimizer finishes, refit the value row of the output layer
    // by least squares on the last hidden layer. Requires a loss of the form
    // (phi0 - T)^2 with T independent of phi0.
    bool polish_value_head = true;

    void validate() const;
    // Epochs for the k-th backward step (k = 0 is the step next to maturity).
    std::size_t epochs_for(std::size_t k, std::size_t n_steps) const;
};

class Adam {
public:
    Adam(std::size_t n, double lr, double beta1, double beta2, double eps);
    void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad);
    std::size_t iterations() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    Eigen::VectorXd m_, v_;
    std::size_t t_ = 0;
};

// Per-sample squared-residual functional of the network outputs
// (phi0, phi1, phi2). Returns the sample loss and writes d loss / d output.
using SampleLoss =
    std::function<double(std::size_t sample, const std::array<double, 3>& out, std::array<double, 3>& grad)>;

// Fully connected ReLU network with a linear 3-output head. Parameters live
// in one flat vector: for each layer, W (out x in, column-major) then b.
class Mlp {
public:
    Mlp() = default;
    explicit Mlp(std::vector<int> sizes);

    const std::vector<int>& sizes() const { return sizes_; }
    std::size_t n_layers() const { return sizes_.size() - 1; }
    Eigen::VectorXd& parameters() { return theta_; }
    const Eigen::VectorXd& parameters() const { return theta_; }
    // [offset, count) of layer l's parameters in the flat vector.
    std::pair<std::size_t, std::size_t> layer_range(std::size_t l) const;

    // He-normal hidden weights, zero output weights, output bias = head_bias.
    void initialize(std::uint64_t seed, const std::array<double, 3>& head_bias);

    // X is in x B (column per sample); returns 3 x B.
    Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
    // Activations of the last hidden layer, hidden x B.
    Eigen::MatrixXd features(const Eigen::MatrixXd& x) const;

    // Mean loss over the given samples; fills grad (same layout as the
    // parameters) when non-null.
    double loss_and_gradient(const Eigen::MatrixXd& x, const std::vector<std::size_t>& samples,
                             const SampleLoss& loss, Eigen::VectorXd* grad) const;

private:
    std::vector<int> sizes_;
    std::vector<std::size_t> offsets_;
    Eigen::VectorXd theta_;
};

struct PolyModel {
    int degree = 0;
    Standardizer standardizer;
    std::vector<std::array<int, 2>> exponents;
    Eigen::MatrixXd coefficients; // n_terms x 3
    double condition = 0.0;
};

struct NetModel {
    Standardizer standardizer;
    Mlp net;
    double final_loss = 0.0;
    std::size_t epochs = 0;
};

struct TableModel {
    std::map<std::int64_t, std::array<double, 3>> values;
};

class Regressor {
public:
    Regressor() = default;
    explicit Regressor(PolyModel m) : model_(std::move(m)), fitted_(true) {}
    explicit Regressor(NetModel m) : model_(std::move(m)), fitted_(true) {}
    explicit Regressor(TableModel m) : model_(std::move(m)), fitted_(true) {}

    bool fitted() const { return fitted_; }
    RegressorKind kind() const;

    // inputs: m x 2 (S, V) for poly / net, m x 1 (state index) for table.
    // Throws StateError when unfitted.
    Eigen::MatrixXd predict(const Matrix& inputs) const;

    const PolyModel* poly() const { return std::get_if<PolyModel>(&model_); }
    const NetModel* net() const { return std::get_if<NetModel>(&model_); }
    const TableModel* table() const { return std::get_if<TableModel>(&model_); }

    // "RDRG" versioned little-endian format.
    void write(std::ostream& out) const;
    static Regressor read(std::istream& in);

private:
    std::variant<std::monostate, PolyModel, NetModel, TableModel> model_;
    bool fitted_ = false;
};

inline constexpr double kPolyRidge = 1e-10;

// Least squares on the tensor basis {x^j y^k : j + k <= degree} of the
// standardized inputs; one column of coefficients per target column.
Regressor fit_poly(const Matrix& inputs, const Eigen::MatrixXd& targets, int degree);

// Group means of the targets by integer state key.
Regressor fit_table(const std::vector<std::int64_t>& keys, const Eigen::MatrixXd& targets);

// Mini-batch Adam on the mean of `loss` over all samples. When warm_start
// holds a net of the same architecture its parameters seed the fit;
// otherwise He initialization with head bias `head_bias`. `step` is
// reported in TrainingDiverged and salts the mini-batch shuffle.
Regressor fit_net(const Matrix& inputs, const SampleLoss& loss, const NetConfig& config,
                  std::size_t epochs, const Regressor* warm_start,
                  const std::array<double, 3>& head_bias, std::size_t step = 0);

} // namespace riskdiff
