#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>

#include <Eigen/Dense>

namespace riskdiff {

// Row-major so that one row is one simulated path.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using IndexMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using ScalarFn = std::function<double(double)>;

// Parameters of the arctangent stochastic volatility model
//   sigma(y) = (a/pi)(atan(y - 1) + pi/2) + b,
//   dV = alpha (m - V) dt + nu sqrt(2 alpha) dW2.
struct ArctanParams {
    double a = 0.7;
    double b = 0.03;
    double alpha = 5.0;
    double m = 0.0;
    double nu = 1.0;
};

double arctan_sigma(const ArctanParams& p, double y);

// Discounted asset S and volatility state V:
//   dS = (mu(V) - r) S dt + sigma(V) S dW1,
//   dV = vol_drift(V) dt + vol_diff(V) dW2,   d<W1, W2> = rho dt.
struct MarketModel {
    double r = 0.0;
    double rho = 0.0;
    double s0 = 100.0;
    double v0 = 0.0;
    ScalarFn mu_fn;
    ScalarFn sigma_fn;
    ScalarFn vol_drift_fn;
    ScalarFn vol_diff_fn;
    // Set when the model was built from the arctangent preset.
    std::optional<ArctanParams> arctan;

    static MarketModel arctangent(double r, double mu, const ArctanParams& p, double rho,
                                  double s0, double v0);
    // Constant volatility, V frozen at v0; used by tests and the oracle
    // (sigma is then independent of the V branch).
    static MarketModel constant_vol(double r, double mu, double sigma, double rho, double s0,
                                    double v0 = 0.0);

    double mu(double v) const { return mu_fn(v); }
    double sigma(double v) const { return sigma_fn(v); }
    double vol_drift(double v) const { return vol_drift_fn(v); }
    double vol_diff(double v) const { return vol_diff_fn(v); }

    // Throws ParameterError when an invariant is broken.
    void validate() const;
};

double sharpe(const MarketModel& model, double v);

struct TimeGrid {
    double maturity = 1.0;
    std::size_t steps = 1;

    TimeGrid() = default;
    TimeGrid(double maturity, std::size_t steps);

    double dt() const { return maturity / static_cast<double>(steps); }
    double time(std::size_t i) const {
        return maturity * static_cast<double>(i) / static_cast<double>(steps);
    }
};

struct EulerState {
    double s;
    double v;
};

// One Euler-Maruyama step. Shared by path simulation and the tree oracle.
// S is absorbed at zero.
EulerState euler_step(const MarketModel& model, double s, double v, double dt, double dw1,
                      double dw2);

// dW2 = rho dW1 + sqrt(1 - rho^2) dW_perp
inline double correlate(double rho, double dw1, double dw_perp) {
    return rho * dw1 + std::sqrt(std::max(0.0, 1.0 - rho * rho)) * dw_perp;
}

struct PathBundle {
    TimeGrid grid;
    std::size_t n_paths = 0;
    Matrix s;   // n_paths x (N+1)
    Matrix v;   // n_paths x (N+1)
    Matrix dw1; // n_paths x N
    Matrix dw2; // n_paths x N
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;
    // Node identities per time step when the bundle enumerates a tree's
    // path space; empty for simulated bundles.
    IndexMatrix node_id;

    std::size_t steps() const { return grid.steps; }
};

PathBundle simulate(const MarketModel& model, const TimeGrid& grid, std::size_t n_paths,
                    std::uint64_t seed, std::uint64_t stream_id = 0);

enum class PayoffKind { AmericanPut, AmericanCall, Zero, Custom };

struct Payoff {
    PayoffKind kind = PayoffKind::AmericanPut;
    double strike = 100.0;
    // Rate used to discount the strike, e^{-r t} K, against the discounted asset.
    double discount_rate = 0.0;
    // (t, discounted S) -> discounted payoff, for PayoffKind::Custom.
    std::function<double(double, double)> custom;

    static Payoff put(double strike, double rate) { return {PayoffKind::AmericanPut, strike, rate, {}}; }
    static Payoff call(double strike, double rate) { return {PayoffKind::AmericanCall, strike, rate, {}}; }
    static Payoff zero() { return {PayoffKind::Zero, 0.0, 0.0, {}}; }

    double operator()(double t, double s) const;
};

Matrix payoff_path(const Payoff& payoff, const PathBundle& bundle);

// Binary path cache: "RDPB", u32 version, u64 seed, u64 stream_id, u64 N,
// u64 n_paths, then little-endian f64 blocks s, v, dw1, dw2 (row-major).
void write_bundle(std::ostream& out, const PathBundle& bundle);
void write_bundle(const std::string& path, const PathBundle& bundle);
PathBundle read_bundle(std::istream& in, double maturity);
PathBundle read_bundle(const std::string& path, double maturity);

} // namespace riskdiff
