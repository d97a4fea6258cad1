#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "approx.hpp"
#include "model.hpp"
#include "risk.hpp"

namespace riskdiff {

struct SolverConfig {
    RegressorKind kind = RegressorKind::Poly;
    int poly_degree = 2;
    NetConfig net;
    // Compute the claim-free risk with a second reflected solve (zeta = 0)
    // instead of reusing the boundary BSDE.
    bool double_solve = false;
    // Net regressor on reflected steps: false fits the unreflected
    // continuation and reflects the fitted value; true places the max
    // inside the regression target. The in-target form admits a zero-loss
    // fit at the barrier when the driver is concave in z (buyer side).
    bool reflect_in_loss = false;
    std::size_t jackknife_folds = 10;
};

inline constexpr double kReflectionTolerance = 1e-9;

struct BackwardSolution {
    TimeGrid grid;
    Matrix y;            // n_paths x (N+1)
    Matrix z1;           // n_paths x N
    Matrix z2;           // n_paths x N
    Matrix k_increments; // n_paths x N, zero for plain BSDEs
    // regressors[i] for i >= 1: conditional moments (poly, table) or
    // (phi0, phi1, phi2) (net). Step 0 uses the closed-form sample
    // estimator and stores nothing.
    std::vector<Regressor> regressors;
    // Leave-one-fold-out values of the time-0 estimate.
    std::vector<double> y0_replicates;
    bool reflected = false;
    double max_clip = 0.0;
    bool clipped = false; // some net value was lifted by more than 1e-6
    std::size_t skorokhod_violations = 0;

    double y0() const { return y(0, 0); }
};

// Plain BSDE from the given terminal values (one per path).
BackwardSolution solve_bsde(const MarketModel& model, const PathBundle& bundle,
                            const EffectiveDriver& eff, const SolverConfig& config,
                            const Eigen::VectorXd& terminal);

// Boundary process Y: plain BSDE with zero terminal value.
BackwardSolution solve_boundary_bsde(const MarketModel& model, const PathBundle& bundle,
                                     const EffectiveDriver& eff, const SolverConfig& config);

// Reflected BSDE above `barrier` (n_paths x (N+1)).
BackwardSolution solve_reflected(const MarketModel& model, const PathBundle& bundle,
                                 const EffectiveDriver& eff, const SolverConfig& config,
                                 const Matrix& barrier, const Eigen::VectorXd& terminal);

struct PricingResult {
    Side side = Side::Seller;
    double strike = 0.0;
    bool american = true;
    double price = 0.0;
    double risk_with_claim = 0.0;
    double risk_without = 0.0;
    double mc_std_error = 0.0;
    std::vector<double> replicates;
    RegressorKind regressor = RegressorKind::Poly;
    std::size_t steps = 0;
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
    double max_clip = 0.0;
    std::size_t skorokhod_violations = 0;
};

double jackknife_std_error(const std::vector<double>& replicates);
// Paired jackknife error of a.price - b.price (same bundle, same folds).
double joint_std_error(const PricingResult& a, const PricingResult& b);

// Indifference price on a given bundle. `boundary` may carry a
// precomputed boundary solve for the same side; it is computed otherwise.
PricingResult price(Side side, const MarketModel& model, const Payoff& payoff,
                    const Driver& driver, const PathBundle& bundle, const SolverConfig& config,
                    const BackwardSolution* boundary = nullptr);

// Simulates its own bundle.
PricingResult price(Side side, const MarketModel& model, const TimeGrid& grid,
                    const Payoff& payoff, const Driver& driver, std::size_t n_paths,
                    std::uint64_t seed, const SolverConfig& config);

// European counterpart: plain BSDE with terminal zeta_T.
PricingResult price_european(Side side, const MarketModel& model, const Payoff& payoff,
                             const Driver& driver, const PathBundle& bundle,
                             const SolverConfig& config, const BackwardSolution* boundary = nullptr);

struct SmileRow {
    double strike = 0.0;
    std::vector<PricingResult> american; // one per requested side
    std::vector<PricingResult> european; // empty unless requested
};

// Prices every strike for every side on one shared bundle; rows ordered by
// strike. Strikes run concurrently when threads are available.
std::vector<SmileRow> smile(const std::vector<Side>& sides, const MarketModel& model,
                            const std::vector<Payoff>& payoffs, const Driver& driver,
                            const PathBundle& bundle, const SolverConfig& config,
                            bool with_european);

// "RDBS": RDPB-style header then y, z1, z2, k blocks.
void write_solution(std::ostream& out, const BackwardSolution& sol, const PathBundle& bundle);
BackwardSolution read_solution(std::istream& in, double maturity);

} // namespace riskdiff
