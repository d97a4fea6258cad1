#include "oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "errors.hpp"

namespace riskdiff {

std::size_t Tree::node_count() const {
    std::size_t total = 0;
    for (std::size_t i = 0; i <= steps(); ++i) total += nodes_at(i);
    return total;
}

Tree build_tree(const MarketModel& model, const TimeGrid& grid) {
    if (grid.steps > kMaxTreeSteps) {
        throw SizeError("build_tree: N = " + std::to_string(grid.steps) + " exceeds " +
                        std::to_string(kMaxTreeSteps));
    }
    model.validate();
    Tree t;
    t.grid = grid;
    t.rho = model.rho;
    const std::size_t n = grid.steps;
    const double dt = grid.dt();
    const double h = std::sqrt(dt);
    t.s.resize(n + 1);
    t.v.resize(n + 1);
    t.dw1.resize(n + 1);
    t.dw2.resize(n + 1);
    t.s[0] = Eigen::VectorXd::Constant(1, model.s0);
    t.v[0] = Eigen::VectorXd::Constant(1, model.v0);
    for (std::size_t i = 1; i <= n; ++i) {
        const auto count = static_cast<Eigen::Index>(t.nodes_at(i));
        t.s[i].resize(count);
        t.v[i].resize(count);
        t.dw1[i].resize(count);
        t.dw2[i].resize(count);
        for (Eigen::Index c = 0; c < count; ++c) {
            const auto parent = c / 4;
            const auto b = c % 4;
            const double dw1 = (b & 1) ? -h : h;
            const double dwp = (b & 2) ? -h : h;
            const double dw2 = correlate(model.rho, dw1, dwp);
            const auto next = euler_step(model, t.s[i - 1][parent], t.v[i - 1][parent], dt, dw1, dw2);
            t.s[i][c] = next.s;
            t.v[i][c] = next.v;
            t.dw1[i][c] = dw1;
            t.dw2[i][c] = dw2;
        }
    }
    return t;
}

namespace {

inline std::array<double, 2> decorrelate(double rho, double a1, double a2) {
    const double det = 1.0 - rho * rho;
    if (det > 1e-12) return {(a1 - rho * a2) / det, (a2 - rho * a1) / det};
    return {0.25 * (a1 + rho * a2), 0.25 * (rho * a1 + a2)};
}

OracleSolution recurse(const Tree& tree, const MarketModel& model, const EffectiveDriver& eff,
                       const NodeValues* barrier, const Eigen::VectorXd& terminal,
                       std::size_t horizon) {
    if (horizon == 0 || horizon > tree.steps()) horizon = tree.steps();
    if (terminal.size() != static_cast<Eigen::Index>(tree.nodes_at(horizon))) {
        throw ShapeError("oracle: terminal size does not match the horizon level");
    }
    if (barrier && barrier->size() < horizon + 1) throw ShapeError("oracle: barrier has too few levels");
    const double dt = tree.grid.dt();
    OracleSolution sol;
    sol.y.resize(horizon + 1);
    sol.z1.resize(horizon);
    sol.z2.resize(horizon);
    sol.exercised.resize(horizon + 1);
    sol.y[horizon] = terminal;
    sol.exercised[horizon].assign(tree.nodes_at(horizon), false);
    if (barrier) {
        for (Eigen::Index j = 0; j < terminal.size(); ++j)
            sol.exercised[horizon][static_cast<std::size_t>(j)] = terminal[j] <= (*barrier)[horizon][j];
    }
    for (std::size_t i = horizon; i-- > 0;) {
        const auto count = static_cast<Eigen::Index>(tree.nodes_at(i));
        sol.y[i].resize(count);
        sol.z1[i].resize(count);
        sol.z2[i].resize(count);
        sol.exercised[i].assign(static_cast<std::size_t>(count), false);
        const auto& yn = sol.y[i + 1];
        for (Eigen::Index j = 0; j < count; ++j) {
            double m = 0.0, a1 = 0.0, a2 = 0.0;
            for (Eigen::Index b = 0; b < 4; ++b) {
                const auto c = 4 * j + b;
                m += yn[c];
                a1 += yn[c] * tree.dw1[i + 1][c];
                a2 += yn[c] * tree.dw2[i + 1][c];
            }
            m *= 0.25;
            const auto z = decorrelate(tree.rho, 0.25 * a1 / dt, 0.25 * a2 / dt);
            const double cont = m + eff(sharpe(model, tree.v[i][j]), z[0], z[1]) * dt;
            double y = cont;
            if (barrier && (*barrier)[i][j] >= cont) {
                y = (*barrier)[i][j];
                sol.exercised[i][static_cast<std::size_t>(j)] = true;
            }
            sol.y[i][j] = y;
            sol.z1[i][j] = z[0];
            sol.z2[i][j] = z[1];
        }
    }
    return sol;
}

} // namespace

OracleSolution oracle_bsde(const Tree& tree, const MarketModel& model, const EffectiveDriver& eff,
                           const Eigen::VectorXd& terminal, std::size_t horizon) {
    return recurse(tree, model, eff, nullptr, terminal, horizon);
}

OracleSolution oracle_reflected(const Tree& tree, const MarketModel& model,
                                const EffectiveDriver& eff, const NodeValues& barrier,
                                const Eigen::VectorXd& terminal) {
    return recurse(tree, model, eff, &barrier, terminal, tree.steps());
}

NodeValues tree_payoff(const Tree& tree, const Payoff& payoff) {
    NodeValues z(tree.steps() + 1);
    for (std::size_t i = 0; i <= tree.steps(); ++i) {
        const double t = tree.grid.time(i);
        z[i] = tree.s[i].unaryExpr([&](double s) { return payoff(t, s); });
    }
    return z;
}

OraclePrice oracle_price(Side side, const MarketModel& model, const TimeGrid& grid,
                         const Payoff& payoff, const Driver& driver, bool american) {
    const Tree tree = build_tree(model, grid);
    const EffectiveDriver eff(side, driver);
    const std::size_t n = tree.steps();
    OraclePrice out;
    out.boundary = oracle_bsde(tree, model, eff, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(tree.nodes_at(n))));
    const NodeValues zeta = tree_payoff(tree, payoff);
    if (american) {
        NodeValues barrier(n + 1);
        for (std::size_t i = 0; i <= n; ++i) barrier[i] = zeta[i] + out.boundary.y[i];
        out.claim = oracle_reflected(tree, model, eff, barrier, barrier[n]);
    } else {
        out.claim = oracle_bsde(tree, model, eff, zeta[n]);
    }
    auto& r = out.result;
    r.side = side;
    r.strike = payoff.strike;
    r.american = american;
    r.risk_with_claim = out.claim.root();
    r.risk_without = out.boundary.root();
    r.price = r.risk_with_claim - r.risk_without;
    r.mc_std_error = 0.0;
    r.regressor = RegressorKind::Table;
    r.steps = n;
    r.n_paths = tree.nodes_at(n);
    return out;
}

PathBundle tree_path_bundle(const Tree& tree) {
    const std::size_t n = tree.steps();
    const std::size_t paths = tree.nodes_at(n);
    const auto np = static_cast<Eigen::Index>(paths);
    const auto cols = static_cast<Eigen::Index>(n);
    PathBundle b;
    b.grid = tree.grid;
    b.n_paths = paths;
    b.s.resize(np, cols + 1);
    b.v.resize(np, cols + 1);
    b.dw1.resize(np, cols);
    b.dw2.resize(np, cols);
    b.node_id.resize(np, cols + 1);
    for (Eigen::Index p = 0; p < np; ++p) {
        for (std::size_t i = 0; i <= n; ++i) {
            const auto node = static_cast<Eigen::Index>(static_cast<std::size_t>(p) >> (2 * (n - i)));
            const auto c = static_cast<Eigen::Index>(i);
            b.s(p, c) = tree.s[i][node];
            b.v(p, c) = tree.v[i][node];
            b.node_id(p, c) = node;
            if (i >= 1) {
                b.dw1(p, c - 1) = tree.dw1[i][node];
                b.dw2(p, c - 1) = tree.dw2[i][node];
            }
        }
    }
    return b;
}

std::string node_label(std::size_t level, std::size_t index) {
    std::string label(level + 1, 'R');
    for (std::size_t k = level; k >= 1; --k) {
        label[k] = static_cast<char>('0' + index % 4);
        index /= 4;
    }
    return label;
}

void write_oracle_csv(std::ostream& out, const Tree& tree, const OracleSolution& sol) {
    out << "node,t,S,V,y,z1,z2,exercised\n";
    char buf[64];
    const auto num = [&](double x) {
        std::snprintf(buf, sizeof buf, "%.17g", x);
        return std::string(buf);
    };
    for (std::size_t i = 0; i < sol.y.size(); ++i) {
        for (std::size_t j = 0; j < tree.nodes_at(i); ++j) {
            const auto e = static_cast<Eigen::Index>(j);
            out << node_label(i, j) << ',' << num(tree.grid.time(i)) << ',' << num(tree.s[i][e]) << ','
                << num(tree.v[i][e]) << ',' << num(sol.y[i][e]) << ',';
            if (i < sol.z1.size()) out << num(sol.z1[i][e]) << ',' << num(sol.z2[i][e]);
            else out << ',';
            out << ',' << (sol.exercised[i][j] ? 1 : 0) << '\n';
        }
    }
}

} // namespace riskdiff
