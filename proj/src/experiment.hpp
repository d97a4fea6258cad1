#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "model.hpp"
#include "risk.hpp"
#include "solver.hpp"

namespace riskdiff {

struct ModelBlock {
    double r = 0.02;
    double mu = 0.08;
    double a = 0.7;
    double b = 0.03;
    double alpha = 5.0;
    double m = 0.0;
    double nu = 1.0;
    double rho = -0.2;
    double s0 = 100.0;
    double v0 = 0.15;
};

struct DriverBlock {
    std::string family = "entropic"; // entropic | quartic
    double gamma = 1.0;
    double eta = 0.2;
};

struct PayoffBlock {
    std::string kind = "put"; // put | call | zero
    std::vector<double> strikes{85, 90, 95, 100, 105, 110, 115};
};

struct OutputBlock {
    std::string dir = "out";
    bool svg = true;
    bool european = true;
    // Re-run the smile with the other regressor (poly <-> net) and report
    // per-strike price differences.
    bool compare = false;
};

struct ValidateBlock {
    double box = 10.0;
    std::size_t n_samples = 10000;
    std::vector<std::size_t> oracle_steps{2, 3, 4};
};

struct ExperimentConfig {
    std::string name = "custom";
    ModelBlock model;
    double maturity = 0.25;
    std::size_t steps = 10;
    DriverBlock driver;
    PayoffBlock payoff;
    SolverConfig solver;
    std::size_t n_paths = 4096;
    std::uint64_t seed = 1;
    OutputBlock output;
    ValidateBlock validate;

    MarketModel market() const;
    TimeGrid grid() const;
    Driver make_driver() const;
    Payoff make_payoff(double strike) const;
    std::vector<Payoff> payoffs() const;
    // Throws ConfigError naming the offending field.
    void check() const;
};

std::vector<std::string> preset_names();
// "paper-fig1" (full schedule) or "paper-fig1-lite". Throws ConfigError.
ExperimentConfig preset(const std::string& name);

// JSON document; unknown keys are rejected. An optional top-level
// "preset" key selects the base that the other keys override.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json(const ExperimentConfig& cfg);

std::vector<Side> parse_sides(const std::string& s); // buyer | seller | both

struct PropertyCheck {
    std::string name;
    double strike = 0.0;
    std::string side;
    double value = 0.0;     // the quantity that must be >= -tolerance
    double tolerance = 0.0;
    bool passed = true;
};

// Spread, floor, strike monotonicity and American >= European checks on
// a smile. `se_multiple_*` scales the joint jackknife errors (0 = exact).
std::vector<PropertyCheck> smile_properties(const std::vector<SmileRow>& rows,
                                            const std::vector<Side>& sides, double s0,
                                            double se_spread = 2.0, double se_floor = 3.0,
                                            double se_monotone = 2.0, double se_european = 2.0,
                                            double exact_tol = 0.0);

struct SmileOutcome {
    std::vector<SmileRow> rows;
    std::vector<Side> sides;
    std::vector<PropertyCheck> properties;
    std::vector<std::string> files;
    double seconds = 0.0;
};

SmileOutcome run_smile(const ExperimentConfig& cfg, const std::vector<Side>& sides);

PricingResult run_price(const ExperimentConfig& cfg, double strike, Side side);
std::string format_price_line(const PricingResult& r);

struct ValidateOutcome {
    bool passed = false;
    std::size_t driver_violations = 0;
    double oracle_max_abs_diff = 0.0;
    std::size_t property_failures = 0;
    std::vector<std::string> files;
};

ValidateOutcome run_validate(const ExperimentConfig& cfg);

// Writes the RDPB path cache; returns the file path.
std::string run_simulate(const ExperimentConfig& cfg);

// Writes the oracle node CSV for one strike and side; returns the file path.
std::string run_oracle(const ExperimentConfig& cfg, double strike, Side side);

} // namespace riskdiff
