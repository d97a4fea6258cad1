#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "model.hpp"
#include "risk.hpp"
#include "solver.hpp"

namespace riskdiff {

inline constexpr std::size_t kMaxTreeSteps = 8;

// Full non-recombining tree. Level i holds 4^i nodes; node j at level i has
// children 4j + b, b = 0..3, with
//   dW1 = (b & 1 ? -1 : +1) sqrt(dt),  dW_perp = (b & 2 ? -1 : +1) sqrt(dt),
// each with probability 1/4. Increments are stored on the child node.
struct Tree {
    TimeGrid grid;
    double rho = 0.0;
    std::vector<Eigen::VectorXd> s;   // per level
    std::vector<Eigen::VectorXd> v;   // per level
    std::vector<Eigen::VectorXd> dw1; // per level, empty at level 0
    std::vector<Eigen::VectorXd> dw2;

    std::size_t steps() const { return grid.steps; }
    std::size_t nodes_at(std::size_t level) const { return std::size_t{1} << (2 * level); }
    std::size_t node_count() const;
};

Tree build_tree(const MarketModel& model, const TimeGrid& grid);

// Values per level; z vectors exist for levels below the horizon.
struct OracleSolution {
    std::vector<Eigen::VectorXd> y;
    std::vector<Eigen::VectorXd> z1;
    std::vector<Eigen::VectorXd> z2;
    std::vector<std::vector<bool>> exercised; // barrier active (reflected only)

    double root() const { return y.front()[0]; }
};

// Node-indexed values of one quantity, levels 0..N.
using NodeValues = std::vector<Eigen::VectorXd>;

// Plain recursion from `terminal` at level `horizon` (defaults to N) back to
// the root: z = C^{-1} E[y' dW] / dt, y = E[y'] + f(lambda, z) dt.
OracleSolution oracle_bsde(const Tree& tree, const MarketModel& model, const EffectiveDriver& eff,
                           const Eigen::VectorXd& terminal, std::size_t horizon = 0);

// Same recursion with y = max(barrier, E[y'] + f dt).
OracleSolution oracle_reflected(const Tree& tree, const MarketModel& model,
                                const EffectiveDriver& eff, const NodeValues& barrier,
                                const Eigen::VectorXd& terminal);

NodeValues tree_payoff(const Tree& tree, const Payoff& payoff);

struct OraclePrice {
    PricingResult result;
    OracleSolution boundary;
    OracleSolution claim;
};

// Exact analogue of solver::price (american) or price_european.
OraclePrice oracle_price(Side side, const MarketModel& model, const TimeGrid& grid,
                         const Payoff& payoff, const Driver& driver, bool american = true);

// Every root-to-leaf path of the tree as a bundle (4^N paths), with tree
// node indices in node_id for table regression.
PathBundle tree_path_bundle(const Tree& tree);

// Node label: "R" followed by the branch digits from the root.
std::string node_label(std::size_t level, std::size_t index);

// CSV: node,t,S,V,y,z1,z2,exercised (z empty at the last level).
void write_oracle_csv(std::ostream& out, const Tree& tree, const OracleSolution& sol);

} // namespace riskdiff
