#include "model.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "binio.hpp"
#include "errors.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace riskdiff {

double arctan_sigma(const ArctanParams& p, double y) {
    return p.a / std::numbers::pi * (std::atan(y - 1.0) + std::numbers::pi / 2.0) + p.b;
}

MarketModel MarketModel::arctangent(double r, double mu, const ArctanParams& p, double rho,
                                    double s0, double v0) {
    MarketModel m;
    m.r = r;
    m.rho = rho;
    m.s0 = s0;
    m.v0 = v0;
    m.mu_fn = [mu](double) { return mu; };
    m.sigma_fn = [p](double y) { return arctan_sigma(p, y); };
    m.vol_drift_fn = [p](double y) { return p.alpha * (p.m - y); };
    const double diff = p.nu * std::sqrt(2.0 * p.alpha);
    m.vol_diff_fn = [diff](double) { return diff; };
    m.arctan = p;
    return m;
}

MarketModel MarketModel::constant_vol(double r, double mu, double sigma, double rho, double s0,
                                      double v0) {
    MarketModel m;
    m.r = r;
    m.rho = rho;
    m.s0 = s0;
    m.v0 = v0;
    m.mu_fn = [mu](double) { return mu; };
    m.sigma_fn = [sigma](double) { return sigma; };
    m.vol_drift_fn = [](double) { return 0.0; };
    m.vol_diff_fn = [](double) { return 0.0; };
    return m;
}

void MarketModel::validate() const {
    if (!mu_fn || !sigma_fn || !vol_drift_fn || !vol_diff_fn) {
        throw ParameterError("model: coefficient function missing");
    }
    if (!std::isfinite(r) || !std::isfinite(s0) || !std::isfinite(v0)) {
        throw ParameterError("model: non-finite r, s0 or v0");
    }
    if (!(std::fabs(rho) <= 1.0)) throw ParameterError("model: |rho| must be <= 1");
    if (!(s0 > 0.0)) throw ParameterError("model: s0 must be positive");
    if (arctan) {
        const auto& p = *arctan;
        if (!(p.b > 0.0)) throw ParameterError("model: arctangent b must be positive");
        if (!(p.a >= 0.0)) throw ParameterError("model: arctangent a must be non-negative");
        if (!(p.alpha >= 0.0)) throw ParameterError("model: alpha must be non-negative");
        if (!(p.nu >= 0.0)) throw ParameterError("model: nu must be non-negative");
        if (!std::isfinite(p.m)) throw ParameterError("model: non-finite m");
    }
    if (!(sigma(v0) > 0.0)) throw ParameterError("model: sigma(v0) must be positive");
}

double sharpe(const MarketModel& model, double v) {
    const double vol = model.sigma(v);
    if (!(vol > 0.0)) throw DomainError("sharpe: sigma(v) must be positive");
    return (model.mu(v) - model.r) / vol;
}

TimeGrid::TimeGrid(double maturity_, std::size_t steps_) : maturity(maturity_), steps(steps_) {
    if (steps < 1) throw ParameterError("grid: N must be >= 1");
    if (!(maturity > 0.0) || !std::isfinite(maturity)) {
        throw ParameterError("grid: maturity must be positive");
    }
}

EulerState euler_step(const MarketModel& model, double s, double v, double dt, double dw1,
                      double dw2) {
    const double vol = model.sigma(v);
    double s_next = s + (model.mu(v) - model.r) * s * dt + vol * s * dw1;
    if (!(s_next > 0.0)) s_next = 0.0;
    const double v_next = v + model.vol_drift(v) * dt + model.vol_diff(v) * dw2;
    return {s_next, v_next};
}

PathBundle simulate(const MarketModel& model, const TimeGrid& grid, std::size_t n_paths,
                    std::uint64_t seed, std::uint64_t stream_id) {
    model.validate();
    if (n_paths == 0) throw DomainError("simulate: n_paths must be >= 1");
    const std::size_t n = grid.steps;
    PathBundle b;
    b.grid = grid;
    b.n_paths = n_paths;
    b.seed = seed;
    b.stream_id = stream_id;
    b.s.resize(static_cast<Eigen::Index>(n_paths), static_cast<Eigen::Index>(n + 1));
    b.v.resize(static_cast<Eigen::Index>(n_paths), static_cast<Eigen::Index>(n + 1));
    b.dw1.resize(static_cast<Eigen::Index>(n_paths), static_cast<Eigen::Index>(n));
    b.dw2.resize(static_cast<Eigen::Index>(n_paths), static_cast<Eigen::Index>(n));

    const rng::CounterRng gen(seed, stream_id);
    const double dt = grid.dt();
    const double sqdt = std::sqrt(dt);
    parallel_for(n_paths, [&](std::size_t p) {
        const auto row = static_cast<Eigen::Index>(p);
        double s = model.s0;
        double v = model.v0;
        b.s(row, 0) = s;
        b.v(row, 0) = v;
        for (std::size_t i = 0; i < n; ++i) {
            const auto z = gen.normals(p, static_cast<std::uint32_t>(i));
            const double dw1 = sqdt * z[0];
            const double dw2 = correlate(model.rho, dw1, sqdt * z[1]);
            const auto next = euler_step(model, s, v, dt, dw1, dw2);
            s = next.s;
            v = next.v;
            const auto col = static_cast<Eigen::Index>(i);
            b.dw1(row, col) = dw1;
            b.dw2(row, col) = dw2;
            b.s(row, col + 1) = s;
            b.v(row, col + 1) = v;
        }
    });
    return b;
}

double Payoff::operator()(double t, double s) const {
    switch (kind) {
    case PayoffKind::AmericanPut:
        return std::max(std::exp(-discount_rate * t) * strike - s, 0.0);
    case PayoffKind::AmericanCall:
        return std::max(s - std::exp(-discount_rate * t) * strike, 0.0);
    case PayoffKind::Zero:
        return 0.0;
    case PayoffKind::Custom:
        if (!custom) throw ParameterError("payoff: custom kind without a function");
        return custom(t, s);
    }
    return 0.0;
}

Matrix payoff_path(const Payoff& payoff, const PathBundle& bundle) {
    const auto cols = static_cast<Eigen::Index>(bundle.steps() + 1);
    if (bundle.s.rows() != static_cast<Eigen::Index>(bundle.n_paths) || bundle.s.cols() != cols) {
        throw ShapeError("payoff_path: bundle shape does not match its grid");
    }
    Matrix out(bundle.s.rows(), cols);
    for (Eigen::Index i = 0; i < cols; ++i) {
        const double t = bundle.grid.time(static_cast<std::size_t>(i));
        for (Eigen::Index p = 0; p < out.rows(); ++p) out(p, i) = payoff(t, bundle.s(p, i));
    }
    return out;
}

namespace {
constexpr std::uint32_t kBundleVersion = 1;
}

void write_bundle(std::ostream& out, const PathBundle& b) {
    binio::write_magic(out, "RDPB");
    binio::write_u32(out, kBundleVersion);
    binio::write_u64(out, b.seed);
    binio::write_u64(out, b.stream_id);
    binio::write_u64(out, b.steps());
    binio::write_u64(out, b.n_paths);
    binio::write_block(out, b.s);
    binio::write_block(out, b.v);
    binio::write_block(out, b.dw1);
    binio::write_block(out, b.dw2);
    if (!out) throw IoError("write_bundle: stream failure");
}

void write_bundle(const std::string& path, const PathBundle& b) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path);
    write_bundle(out, b);
}

PathBundle read_bundle(std::istream& in, double maturity) {
    binio::expect_magic(in, "RDPB");
    if (binio::read_u32(in) != kBundleVersion) throw IoError("RDPB: unsupported version");
    PathBundle b;
    b.seed = binio::read_u64(in);
    b.stream_id = binio::read_u64(in);
    const auto n = binio::read_u64(in);
    b.n_paths = binio::read_u64(in);
    b.grid = TimeGrid(maturity, n);
    const auto rows = static_cast<Eigen::Index>(b.n_paths);
    const auto cols = static_cast<Eigen::Index>(n);
    b.s.resize(rows, cols + 1);
    b.v.resize(rows, cols + 1);
    b.dw1.resize(rows, cols);
    b.dw2.resize(rows, cols);
    binio::read_block(in, b.s);
    binio::read_block(in, b.v);
    binio::read_block(in, b.dw1);
    binio::read_block(in, b.dw2);
    return b;
}

PathBundle read_bundle(const std::string& path, double maturity) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return read_bundle(in, maturity);
}

} // namespace riskdiff
