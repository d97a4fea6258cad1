#include "solver.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <mutex>
#include <ostream>

#include "binio.hpp"
#include "errors.hpp"
#include "parallel.hpp"

namespace riskdiff {

namespace {

// Solves C z = a for C = [[1, rho], [rho, 1]] (minimum-norm when singular).
inline std::array<double, 2> decorrelate(double rho, double a1, double a2) {
    const double det = 1.0 - rho * rho;
    if (det > 1e-12) return {(a1 - rho * a2) / det, (a2 - rho * a1) / det};
    return {0.25 * (a1 + rho * a2), 0.25 * (rho * a1 + a2)};
}

Matrix step_features(const PathBundle& b, std::size_t i, RegressorKind kind) {
    const auto col = static_cast<Eigen::Index>(i);
    if (kind == RegressorKind::Table) {
        if (b.node_id.size() == 0) {
            throw ParameterError("table regressor requires a bundle enumerating a tree");
        }
        Matrix f(b.s.rows(), 1);
        for (Eigen::Index p = 0; p < f.rows(); ++p) f(p, 0) = static_cast<double>(b.node_id(p, col));
        return f;
    }
    Matrix f(b.s.rows(), 2);
    f.col(0) = b.s.col(col);
    f.col(1) = b.v.col(col);
    return f;
}

Matrix sharpe_matrix(const MarketModel& model, const PathBundle& b) {
    Matrix lam(b.v.rows(), static_cast<Eigen::Index>(b.steps()));
    for (Eigen::Index p = 0; p < lam.rows(); ++p)
        for (Eigen::Index i = 0; i < lam.cols(); ++i) lam(p, i) = sharpe(model, b.v(p, i));
    return lam;
}

void check_finite(const Eigen::Ref<const Eigen::VectorXd>& v, std::size_t step) {
    if (!v.allFinite()) throw SolverError("non-finite value at time step " + std::to_string(step), step);
}

// Backward engine shared by plain and reflected solves. barrier == nullptr
// means no reflection.
BackwardSolution run_backward(const MarketModel& model, const PathBundle& b,
                              const EffectiveDriver& eff, const SolverConfig& cfg,
                              const Matrix* barrier, const Eigen::VectorXd& terminal) {
    const std::size_t n_steps = b.steps();
    const auto n = static_cast<Eigen::Index>(b.n_paths);
    if (terminal.size() != n) throw ShapeError("solver: terminal size does not match bundle");
    if (barrier && (barrier->rows() != n || barrier->cols() != static_cast<Eigen::Index>(n_steps + 1))) {
        throw ShapeError("solver: barrier shape does not match bundle");
    }
    const double dt = b.grid.dt();
    const double rho = model.rho;
    const Matrix lam = sharpe_matrix(model, b);

    BackwardSolution sol;
    sol.grid = b.grid;
    sol.reflected = barrier != nullptr;
    sol.y = Matrix::Zero(n, static_cast<Eigen::Index>(n_steps + 1));
    sol.z1 = Matrix::Zero(n, static_cast<Eigen::Index>(n_steps));
    sol.z2 = Matrix::Zero(n, static_cast<Eigen::Index>(n_steps));
    sol.k_increments = Matrix::Zero(n, static_cast<Eigen::Index>(n_steps));
    sol.regressors.resize(n_steps);
    sol.y.col(static_cast<Eigen::Index>(n_steps)) = terminal;
    check_finite(terminal, n_steps);

    const Regressor* warm = nullptr;
    for (std::size_t i = n_steps; i-- > 1;) {
        const auto col = static_cast<Eigen::Index>(i);
        const Eigen::VectorXd next = sol.y.col(col + 1);
        const Matrix features = step_features(b, i, cfg.kind);
        Eigen::VectorXd y_i(n);
        Eigen::VectorXd cont(n);

        if (cfg.kind == RegressorKind::Net) {
            const auto& dw1 = b.dw1;
            const auto& dw2 = b.dw2;
            const auto residual = [&](Eigen::Index p, double z1, double z2) {
                return next[p] + eff(lam(p, col), z1, z2) * dt - z1 * dw1(p, col) - z2 * dw2(p, col);
            };
            const SampleLoss loss = [&](std::size_t s, const std::array<double, 3>& out,
                                        std::array<double, 3>& grad) {
                const auto p = static_cast<Eigen::Index>(s);
                const double x = residual(p, out[1], out[2]);
                double target = x;
                bool through = true;
                if (barrier && cfg.reflect_in_loss && (*barrier)(p, col) >= x) {
                    target = (*barrier)(p, col);
                    through = false;
                }
                const double e = out[0] - target;
                grad[0] = 2.0 * e;
                if (through) {
                    const auto gf = eff.grad_z(lam(p, col), out[1], out[2]);
                    grad[1] = -2.0 * e * (gf[0] * dt - dw1(p, col));
                    grad[2] = -2.0 * e * (gf[1] * dt - dw2(p, col));
                } else {
                    grad[1] = 0.0;
                    grad[2] = 0.0;
                }
                return e * e;
            };
            const std::size_t k_back = n_steps - 1 - i;
            const std::size_t epochs = cfg.net.epochs_for(k_back, n_steps);
            sol.regressors[i] = fit_net(features, loss, cfg.net, epochs,
                                        cfg.net.warm_start ? warm : nullptr,
                                        {next.mean(), 0.0, 0.0}, i);
            warm = &sol.regressors[i];
            const Eigen::MatrixXd out = sol.regressors[i].predict(features);
            y_i = out.col(0);
            sol.z1.col(col) = out.col(1);
            sol.z2.col(col) = out.col(2);
            if (barrier && !cfg.reflect_in_loss) {
                cont = y_i;
                y_i = y_i.cwiseMax(barrier->col(col));
            } else if (barrier) {
                // Continuation estimate for the reflection diagnostics.
                Eigen::MatrixXd pathwise(n, 3);
                for (Eigen::Index p = 0; p < n; ++p) pathwise(p, 0) = residual(p, out(p, 1), out(p, 2));
                pathwise.col(1).setZero();
                pathwise.col(2).setZero();
                cont = fit_poly(features, pathwise, 2).predict(features).col(0);
            } else {
                cont = y_i;
            }
        } else {
            // The z moments regress (y' - E[y' | x]) dW, which has the same
            // conditional mean as y' dW without the level of y' in its noise.
            std::vector<std::int64_t> keys;
            if (cfg.kind == RegressorKind::Table) {
                keys.resize(static_cast<std::size_t>(n));
                for (Eigen::Index p = 0; p < n; ++p) keys[static_cast<std::size_t>(p)] = b.node_id(p, col);
            }
            const auto fit = [&](const Eigen::MatrixXd& t) {
                return cfg.kind == RegressorKind::Table ? fit_table(keys, t)
                                                        : fit_poly(features, t, cfg.poly_degree);
            };
            Eigen::MatrixXd targets = Eigen::MatrixXd::Zero(n, 3);
            targets.col(0) = next;
            const Eigen::VectorXd centred = next - fit(targets).predict(features).col(0);
            targets.col(1) = centred.cwiseProduct(b.dw1.col(col)) / dt;
            targets.col(2) = centred.cwiseProduct(b.dw2.col(col)) / dt;
            sol.regressors[i] = fit(targets);
            const Eigen::MatrixXd mom = sol.regressors[i].predict(features);
            for (Eigen::Index p = 0; p < n; ++p) {
                const auto z = decorrelate(rho, mom(p, 1), mom(p, 2));
                sol.z1(p, col) = z[0];
                sol.z2(p, col) = z[1];
                cont[p] = mom(p, 0) + eff(lam(p, col), z[0], z[1]) * dt;
            }
            y_i = cont;
            if (barrier) y_i = y_i.cwiseMax(barrier->col(col));
        }

        if (barrier) {
            for (Eigen::Index p = 0; p < n; ++p) {
                const double bar = (*barrier)(p, col);
                if (y_i[p] < bar) {
                    const double lift = bar - y_i[p];
                    sol.max_clip = std::max(sol.max_clip, lift);
                    y_i[p] = bar;
                }
                const double k = std::max(0.0, bar - cont[p]);
                sol.k_increments(p, col) = k;
                if (k * (y_i[p] - bar) > 1e-6 * (1.0 + std::fabs(y_i[p]))) ++sol.skorokhod_violations;
            }
        }
        check_finite(y_i, i);
        sol.y.col(col) = y_i;
    }

    // Step 0: every path sits at (s0, v0), so the conditional expectations
    // are sample means. Replicates leave out one fold of paths each.
    const Eigen::VectorXd next = sol.y.col(1);
    const std::size_t folds = std::max<std::size_t>(1, std::min<std::size_t>(cfg.jackknife_folds, b.n_paths));
    // Per fold: sums of y', y' dW1, y' dW2, dW1, dW2. The z estimate uses
    // the centred products (y' - mean) dW of the estimation sample.
    std::vector<std::array<double, 5>> fold_sums(folds, {0.0, 0.0, 0.0, 0.0, 0.0});
    std::vector<std::size_t> fold_counts(folds, 0);
    for (Eigen::Index p = 0; p < n; ++p) {
        auto& s = fold_sums[static_cast<std::size_t>(p) % folds];
        s[0] += next[p];
        s[1] += next[p] * b.dw1(p, 0);
        s[2] += next[p] * b.dw2(p, 0);
        s[3] += b.dw1(p, 0);
        s[4] += b.dw2(p, 0);
        ++fold_counts[static_cast<std::size_t>(p) % folds];
    }
    const double lam0 = lam(0, 0);
    const double bar0 = barrier ? (*barrier)(0, 0) : -std::numeric_limits<double>::infinity();
    const auto estimate = [&](std::size_t skip, std::array<double, 2>& z_out) {
        std::array<double, 5> s{0.0, 0.0, 0.0, 0.0, 0.0};
        std::size_t count = 0;
        for (std::size_t f = 0; f < folds; ++f) {
            if (f == skip) continue;
            for (int k = 0; k < 5; ++k) s[k] += fold_sums[f][k];
            count += fold_counts[f];
        }
        const double inv = 1.0 / static_cast<double>(count);
        const double mean = s[0] * inv;
        z_out = decorrelate(rho, (s[1] - mean * s[3]) * inv / dt, (s[2] - mean * s[4]) * inv / dt);
        const double c = mean + eff(lam0, z_out[0], z_out[1]) * dt;
        return std::pair{c, std::max(bar0, c)};
    };
    std::array<double, 2> z0{};
    const auto [cont0, y0] = estimate(folds, z0);
    if (!std::isfinite(y0)) throw SolverError("non-finite value at time step 0", 0);
    sol.y.col(0).setConstant(y0);
    sol.z1.col(0).setConstant(z0[0]);
    sol.z2.col(0).setConstant(z0[1]);
    if (barrier) sol.k_increments.col(0).setConstant(std::max(0.0, bar0 - cont0));
    if (folds >= 2) {
        for (std::size_t f = 0; f < folds; ++f) {
            std::array<double, 2> zf{};
            sol.y0_replicates.push_back(estimate(f, zf).second);
        }
    }
    sol.clipped = sol.max_clip > 1e-6;
    return sol;
}

} // namespace

BackwardSolution solve_bsde(const MarketModel& model, const PathBundle& bundle,
                            const EffectiveDriver& eff, const SolverConfig& config,
                            const Eigen::VectorXd& terminal) {
    return run_backward(model, bundle, eff, config, nullptr, terminal);
}

BackwardSolution solve_boundary_bsde(const MarketModel& model, const PathBundle& bundle,
                                     const EffectiveDriver& eff, const SolverConfig& config) {
    return solve_bsde(model, bundle, eff, config,
                      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(bundle.n_paths)));
}

BackwardSolution solve_reflected(const MarketModel& model, const PathBundle& bundle,
                                 const EffectiveDriver& eff, const SolverConfig& config,
                                 const Matrix& barrier, const Eigen::VectorXd& terminal) {
    return run_backward(model, bundle, eff, config, &barrier, terminal);
}

double jackknife_std_error(const std::vector<double>& reps) {
    if (reps.size() < 2) return 0.0;
    const auto f = static_cast<double>(reps.size());
    double mean = 0.0;
    for (double r : reps) mean += r;
    mean /= f;
    double ss = 0.0;
    for (double r : reps) ss += (r - mean) * (r - mean);
    return std::sqrt((f - 1.0) / f * ss);
}

double joint_std_error(const PricingResult& a, const PricingResult& b) {
    if (a.replicates.size() != b.replicates.size()) {
        throw ShapeError("joint_std_error: replicate counts differ");
    }
    std::vector<double> d(a.replicates.size());
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = a.replicates[k] - b.replicates[k];
    return jackknife_std_error(d);
}

namespace {

PricingResult assemble(Side side, const Payoff& payoff, const PathBundle& bundle,
                       const SolverConfig& config, const BackwardSolution& with_claim,
                       const BackwardSolution& without, bool american) {
    PricingResult r;
    r.side = side;
    r.strike = payoff.strike;
    r.american = american;
    r.risk_with_claim = with_claim.y0();
    r.risk_without = without.y0();
    r.price = r.risk_with_claim - r.risk_without;
    const std::size_t reps = std::min(with_claim.y0_replicates.size(), without.y0_replicates.size());
    for (std::size_t k = 0; k < reps; ++k) {
        r.replicates.push_back(with_claim.y0_replicates[k] - without.y0_replicates[k]);
    }
    r.mc_std_error = jackknife_std_error(r.replicates);
    r.regressor = config.kind;
    r.steps = bundle.steps();
    r.n_paths = bundle.n_paths;
    r.seed = bundle.seed;
    r.max_clip = with_claim.max_clip;
    r.skorokhod_violations = with_claim.skorokhod_violations;
    return r;
}

} // namespace

PricingResult price(Side side, const MarketModel& model, const Payoff& payoff,
                    const Driver& driver, const PathBundle& bundle, const SolverConfig& config,
                    const BackwardSolution* boundary) {
    const EffectiveDriver eff(side, driver);
    BackwardSolution own;
    if (!boundary) {
        own = solve_boundary_bsde(model, bundle, eff, config);
        boundary = &own;
    }
    const Matrix zeta = payoff_path(payoff, bundle);
    const Matrix barrier = zeta + boundary->y;
    const Eigen::VectorXd terminal = barrier.col(static_cast<Eigen::Index>(bundle.steps()));
    const BackwardSolution with_claim = solve_reflected(model, bundle, eff, config, barrier, terminal);
    if (config.double_solve) {
        const BackwardSolution without = solve_reflected(
            model, bundle, eff, config, boundary->y,
            boundary->y.col(static_cast<Eigen::Index>(bundle.steps())));
        return assemble(side, payoff, bundle, config, with_claim, without, true);
    }
    return assemble(side, payoff, bundle, config, with_claim, *boundary, true);
}

PricingResult price(Side side, const MarketModel& model, const TimeGrid& grid,
                    const Payoff& payoff, const Driver& driver, std::size_t n_paths,
                    std::uint64_t seed, const SolverConfig& config) {
    const PathBundle bundle = simulate(model, grid, n_paths, seed);
    return price(side, model, payoff, driver, bundle, config);
}

PricingResult price_european(Side side, const MarketModel& model, const Payoff& payoff,
                             const Driver& driver, const PathBundle& bundle,
                             const SolverConfig& config, const BackwardSolution* boundary) {
    const EffectiveDriver eff(side, driver);
    BackwardSolution own;
    if (!boundary) {
        own = solve_boundary_bsde(model, bundle, eff, config);
        boundary = &own;
    }
    const Matrix zeta = payoff_path(payoff, bundle);
    const Eigen::VectorXd terminal = zeta.col(static_cast<Eigen::Index>(bundle.steps()));
    const BackwardSolution claim = solve_bsde(model, bundle, eff, config, terminal);
    return assemble(side, payoff, bundle, config, claim, *boundary, false);
}

std::vector<SmileRow> smile(const std::vector<Side>& sides, const MarketModel& model,
                            const std::vector<Payoff>& payoffs, const Driver& driver,
                            const PathBundle& bundle, const SolverConfig& config,
                            bool with_european) {
    if (payoffs.empty()) throw ParameterError("smile: no strikes");
    std::vector<BackwardSolution> boundaries(sides.size());
    parallel_for(sides.size(), [&](std::size_t s) {
        boundaries[s] = solve_boundary_bsde(model, bundle, EffectiveDriver(sides[s], driver), config);
    });

    std::vector<std::size_t> order(payoffs.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return payoffs[a].strike < payoffs[b].strike; });

    std::vector<SmileRow> rows(payoffs.size());
    const std::size_t jobs_per_strike = sides.size() * (with_european ? 2 : 1);
    std::vector<PricingResult> results(payoffs.size() * jobs_per_strike);
    parallel_for(results.size(), [&](std::size_t job) {
        const std::size_t k = job / jobs_per_strike;
        const std::size_t rem = job % jobs_per_strike;
        const std::size_t s = rem % sides.size();
        const bool euro = rem >= sides.size();
        const Payoff& pay = payoffs[order[k]];
        results[job] = euro ? price_european(sides[s], model, pay, driver, bundle, config, &boundaries[s])
                            : price(sides[s], model, pay, driver, bundle, config, &boundaries[s]);
    });
    for (std::size_t k = 0; k < rows.size(); ++k) {
        rows[k].strike = payoffs[order[k]].strike;
        for (std::size_t rem = 0; rem < jobs_per_strike; ++rem) {
            auto& r = results[k * jobs_per_strike + rem];
            (rem < sides.size() ? rows[k].american : rows[k].european).push_back(std::move(r));
        }
    }
    return rows;
}

namespace {
constexpr std::uint32_t kSolutionVersion = 1;
}

void write_solution(std::ostream& out, const BackwardSolution& sol, const PathBundle& bundle) {
    binio::write_magic(out, "RDBS");
    binio::write_u32(out, kSolutionVersion);
    binio::write_u64(out, bundle.seed);
    binio::write_u64(out, bundle.stream_id);
    binio::write_u64(out, sol.grid.steps);
    binio::write_u64(out, static_cast<std::uint64_t>(sol.y.rows()));
    binio::write_block(out, sol.y);
    binio::write_block(out, sol.z1);
    binio::write_block(out, sol.z2);
    binio::write_block(out, sol.k_increments);
    if (!out) throw IoError("write_solution: stream failure");
}

BackwardSolution read_solution(std::istream& in, double maturity) {
    binio::expect_magic(in, "RDBS");
    if (binio::read_u32(in) != kSolutionVersion) throw IoError("RDBS: unsupported version");
    binio::read_u64(in); // seed
    binio::read_u64(in); // stream_id
    const auto n = binio::read_u64(in);
    const auto rows = static_cast<Eigen::Index>(binio::read_u64(in));
    BackwardSolution sol;
    sol.grid = TimeGrid(maturity, n);
    const auto cols = static_cast<Eigen::Index>(n);
    sol.y.resize(rows, cols + 1);
    sol.z1.resize(rows, cols);
    sol.z2.resize(rows, cols);
    sol.k_increments.resize(rows, cols);
    binio::read_block(in, sol.y);
    binio::read_block(in, sol.z1);
    binio::read_block(in, sol.z2);
    binio::read_block(in, sol.k_increments);
    return sol;
}

} // namespace riskdiff
