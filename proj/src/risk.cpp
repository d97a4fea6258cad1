#include "risk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "errors.hpp"
#include "rng.hpp"

namespace riskdiff {

std::array<double, 2> central_gradient(const Fn2& f, double z1, double z2) {
    const double h1 = 1e-6 * (1.0 + std::fabs(z1));
    const double h2 = 1e-6 * (1.0 + std::fabs(z2));
    return {(f(z1 + h1, z2) - f(z1 - h1, z2)) / (2.0 * h1),
            (f(z1, z2 + h2) - f(z1, z2 - h2)) / (2.0 * h2)};
}

std::array<double, 2> Driver::gradient(double z1, double z2) const {
    return grad_g ? grad_g(z1, z2) : central_gradient(g, z1, z2);
}

std::array<double, 2> Driver::gradient_star(double zeta, double z2) const {
    return grad_g_star ? grad_g_star(zeta, z2) : central_gradient(g_star, zeta, z2);
}

Driver entropic_driver(double gamma, double eta) {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
        throw ParameterError("entropic_driver: gamma must be positive");
    }
    if (!std::isfinite(eta)) throw ParameterError("entropic_driver: eta must be finite");
    Driver d;
    d.family = "entropic";
    d.gamma = gamma;
    d.eta = eta;
    d.g = [gamma, eta](double z1, double z2) {
        const double u = z1 + eta * z2;
        return 0.5 * gamma * (u * u + z2 * z2);
    };
    d.grad_g = [gamma, eta](double z1, double z2) -> std::array<double, 2> {
        const double u = z1 + eta * z2;
        return {gamma * u, gamma * (eta * u + z2)};
    };
    d.g_star = [gamma, eta](double zeta, double z2) {
        return zeta * zeta / (2.0 * gamma) - eta * zeta * z2 - 0.5 * gamma * z2 * z2;
    };
    d.grad_g_star = [gamma, eta](double zeta, double z2) -> std::array<double, 2> {
        return {zeta / gamma - eta * z2, -eta * zeta - gamma * z2};
    };
    return d;
}

Driver quartic_driver() {
    Driver d;
    d.family = "quartic";
    d.g = [](double z1, double z2) { return z1 * z1 * z1 * z1 + z2 * z2; };
    d.grad_g = [](double z1, double z2) -> std::array<double, 2> {
        return {4.0 * z1 * z1 * z1, 2.0 * z2};
    };
    d.g_star = [](double zeta, double z2) {
        return 3.0 * std::pow(std::fabs(zeta) / 4.0, 4.0 / 3.0) - z2 * z2;
    };
    return d;
}

Driver conjugate_driver(const Driver& d) {
    Driver c = d;
    c.family = d.family + "*";
    std::swap(c.g, c.g_star);
    std::swap(c.grad_g, c.grad_g_star);
    return c;
}

double numerical_conjugate(const Driver& d, double zeta, double z2, double search_radius,
                           std::size_t grid_points) {
    if (!d.g) throw ParameterError("numerical_conjugate: driver has no g");
    if (!(search_radius > 0.0)) throw ParameterError("numerical_conjugate: radius must be positive");
    grid_points = std::max<std::size_t>(grid_points, 3);
    const auto objective = [&](double z1) { return zeta * z1 - d.g(z1, z2); };

    const double step = 2.0 * search_radius / static_cast<double>(grid_points - 1);
    std::size_t best = 0;
    double best_val = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < grid_points; ++k) {
        const double val = objective(-search_radius + step * static_cast<double>(k));
        if (val > best_val) {
            best_val = val;
            best = k;
        }
    }
    if (best == 0 || best == grid_points - 1) {
        throw RadiusTooSmall("numerical_conjugate: maximizer on the search boundary");
    }

    // Golden-section search on the bracket around the best grid node.
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = -search_radius + step * static_cast<double>(best - 1);
    double hi = -search_radius + step * static_cast<double>(best + 1);
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double f1 = objective(x1);
    double f2 = objective(x2);
    while (hi - lo > 1e-10) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = objective(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = objective(x1);
        }
    }
    return std::max({best_val, f1, f2, objective(0.5 * (lo + hi))});
}

std::size_t DriverChecks::violations() const {
    return static_cast<std::size_t>(
        std::count_if(conditions.begin(), conditions.end(), [](const auto& c) { return c.violated; }));
}

namespace {

struct Sample {
    double z1, z2;
    bool inner;
};

std::vector<Sample> sample_points(const SampleBox& box, std::size_t n, std::uint64_t seed) {
    const double c1 = 0.5 * (box.z1_lo + box.z1_hi);
    const double c2 = 0.5 * (box.z2_lo + box.z2_hi);
    const double h1 = 0.5 * (box.z1_hi - box.z1_lo);
    const double h2 = 0.5 * (box.z2_hi - box.z2_lo);
    const auto is_inner = [&](double a, double b) {
        return std::fabs(a - c1) <= 0.5 * h1 + 1e-12 && std::fabs(b - c2) <= 0.5 * h2 + 1e-12;
    };
    std::vector<Sample> pts;
    pts.reserve(n + 21 * 21);
    // Lattice: covers the axes (e.g. z1 = 0) where kinks typically sit.
    for (int i = 0; i <= 20; ++i)
        for (int j = 0; j <= 20; ++j) {
            const double a = box.z1_lo + (box.z1_hi - box.z1_lo) * i / 20.0;
            const double b = box.z2_lo + (box.z2_hi - box.z2_lo) * j / 20.0;
            pts.push_back({a, b, is_inner(a, b)});
        }
    const rng::CounterRng gen(seed, 0xD41E7ull);
    for (std::size_t k = 0; k < n; ++k) {
        const auto u = gen.uniforms(k, 0);
        const double a = box.z1_lo + (box.z1_hi - box.z1_lo) * u[0];
        const double b = box.z2_lo + (box.z2_hi - box.z2_lo) * u[1];
        pts.push_back({a, b, is_inner(a, b)});
    }
    return pts;
}

// Running maximum of a per-point constant, tracked on the full box and on
// the inner box.
struct MaxTracker {
    double full = -std::numeric_limits<double>::infinity();
    double inner = -std::numeric_limits<double>::infinity();
    std::array<double, 2> arg{0.0, 0.0};
    bool non_finite = false;

    void add(const Sample& s, double value) {
        if (!std::isfinite(value)) {
            non_finite = true;
            arg = {s.z1, s.z2};
            full = std::numeric_limits<double>::infinity();
            return;
        }
        if (value > full) {
            full = value;
            if (!non_finite) arg = {s.z1, s.z2};
        }
        if (s.inner) inner = std::max(inner, value);
    }

    double growth() const {
        if (!(inner > 0.0)) return full > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
        return full / inner;
    }
};

ConditionCheck growth_check(int id, std::string name, const MaxTracker& t) {
    ConditionCheck c;
    c.id = id;
    c.name = std::move(name);
    c.constant = t.full;
    c.worst_point = t.arg;
    const double ratio = t.growth();
    c.violated = t.non_finite || !(ratio <= kGrowthRatioLimit);
    c.detail = "full/inner box constant ratio " + std::to_string(ratio);
    return c;
}

} // namespace

DriverChecks check_conditions(const Fn2& f, const Grad2& grad, const std::string& target,
                              const SampleBox& box, std::size_t n_samples, std::uint64_t seed) {
    const auto pts = sample_points(box, n_samples, seed);
    const auto gradient = [&](double a, double b) {
        return grad ? grad(a, b) : central_gradient(f, a, b);
    };

    // Second differences at step h; returns (f11, f22, f12).
    const auto hessian = [&](double a, double b, double h1, double h2) -> std::array<double, 3> {
        const double f0 = f(a, b);
        const double f11 = (f(a + h1, b) - 2.0 * f0 + f(a - h1, b)) / (h1 * h1);
        const double f22 = (f(a, b + h2) - 2.0 * f0 + f(a, b - h2)) / (h2 * h2);
        const double f12 = (f(a + h1, b + h2) - f(a + h1, b - h2) - f(a - h1, b + h2) +
                            f(a - h1, b - h2)) / (4.0 * h1 * h2);
        return {f11, f22, f12};
    };

    double c1_mismatch = 0.0;
    std::array<double, 2> c1_arg{0.0, 0.0};
    bool c1_bad = false;
    double min_curv = std::numeric_limits<double>::infinity();
    std::array<double, 2> c2_arg{0.0, 0.0};

    MaxTracker lower3, upper3, lower4, upper4, upper5;

    for (const auto& s : pts) {
        const double h1 = 1e-3 * (1.0 + std::fabs(s.z1));
        const double h2 = 1e-3 * (1.0 + std::fabs(s.z2));
        const auto hs = hessian(s.z1, s.z2, h1, h2);
        const auto hd = hessian(s.z1, s.z2, 2.0 * h1, 2.0 * h2);
        for (int k = 0; k < 3; ++k) {
            const double mismatch = std::fabs(hs[k] - hd[k]) / (1.0 + std::fabs(hs[k]));
            if (!std::isfinite(mismatch) || mismatch > 1e-3) c1_bad = true;
            if (!(mismatch <= c1_mismatch)) {
                c1_mismatch = std::isfinite(mismatch) ? mismatch : std::numeric_limits<double>::infinity();
                c1_arg = {s.z1, s.z2};
            }
        }
        if (!(hs[0] >= min_curv)) {
            min_curv = hs[0];
            c2_arg = {s.z1, s.z2};
        }

        const double value = f(s.z1, s.z2);
        const double q2 = 1.0 + s.z2 * s.z2;
        // Smallest c1 with z1^2/(4 c1) - c1 (1 + z2^2) <= g.
        lower3.add(s, (-value + std::sqrt(value * value + q2 * s.z1 * s.z1)) / (2.0 * q2));
        upper3.add(s, value / (1.0 + s.z1 * s.z1 + s.z2 * s.z2));

        const auto gr = gradient(s.z1, s.z2);
        const double lin = 1.0 + std::fabs(s.z1) + std::fabs(s.z2);
        upper4.add(s, std::fabs(gr[0]) / lin);
        lower4.add(s, std::fabs(s.z1) / (std::fabs(gr[0]) + 1.0 + std::fabs(s.z2)));
        upper5.add(s, std::fabs(gr[1]) / lin);
    }

    DriverChecks out;
    out.target = target;

    ConditionCheck smooth;
    smooth.id = 1;
    smooth.name = "C2 smoothness (second differences consistent across step sizes)";
    smooth.constant = c1_mismatch;
    smooth.worst_point = c1_arg;
    smooth.violated = c1_bad;
    smooth.detail = "max relative second-difference mismatch";
    out.conditions.push_back(smooth);

    ConditionCheck convex;
    convex.id = 2;
    convex.name = "strict convexity in z1 (d2/dz1^2 > 0)";
    convex.constant = min_curv;
    convex.worst_point = c2_arg;
    convex.violated = !(min_curv > 0.0);
    convex.detail = "minimum second difference in z1";
    out.conditions.push_back(convex);

    auto c3l = growth_check(3, "quadratic lower bound (c1)", lower3);
    auto c3u = growth_check(3, "quadratic upper bound (c2)", upper3);
    if (!(upper3.full > 0.0)) {
        c3u.violated = true;
        c3u.detail = "no positive upper constant";
    }
    out.conditions.push_back(c3l);
    out.conditions.push_back(c3u);

    auto c4u = growth_check(4, "linear growth of |d/dz1| (c3 upper)", upper4);
    auto c4l = growth_check(4, "linear coercivity of |d/dz1| (c3 lower)", lower4);
    out.conditions.push_back(c4u);
    out.conditions.push_back(c4l);
    out.conditions.push_back(growth_check(5, "linear growth of |d/dz2| (c4)", upper5));
    return out;
}

ValidationReport validate_driver(const Driver& d, const SampleBox& box, std::size_t n_samples,
                                 std::uint64_t seed) {
    if (!d.g || !d.g_star) throw ParameterError("validate_driver: driver incomplete");
    ValidationReport rep;
    rep.n_samples = n_samples;
    rep.primal = check_conditions(d.g, d.grad_g, "g", box, n_samples, seed);
    rep.conjugate = check_conditions(d.g_star, d.grad_g_star, "g_star", box, n_samples, seed);
    return rep;
}

std::string ValidationReport::to_json() const {
    using nlohmann::json;
    const auto render = [](const DriverChecks& dc) {
        json arr = json::array();
        for (const auto& c : dc.conditions) {
            arr.push_back({{"condition", c.id},
                           {"name", c.name},
                           {"constant", std::isfinite(c.constant) ? json(c.constant) : json(nullptr)},
                           {"worst_point", {c.worst_point[0], c.worst_point[1]}},
                           {"violated", c.violated},
                           {"detail", c.detail}});
        }
        return json{{"target", dc.target}, {"violations", dc.violations()}, {"conditions", arr}};
    };
    json j{{"n_samples", n_samples},
           {"passed", passed()},
           {"violations", violations()},
           {"g", render(primal)},
           {"g_star", render(conjugate)}};
    return j.dump(2);
}

const char* side_name(Side side) { return side == Side::Seller ? "seller" : "buyer"; }

Side parse_side(const std::string& s) {
    if (s == "seller" || s == "sell") return Side::Seller;
    if (s == "buyer" || s == "buy") return Side::Buyer;
    throw ParameterError("unknown side '" + s + "'");
}

EffectiveDriver::EffectiveDriver(Side side, Driver base) : side_(side), base_(std::move(base)) {
    if (!base_.g_star) throw ParameterError("effective driver: base driver has no g*");
}

EffectiveDriver EffectiveDriver::custom(Fn3 f, Grad3 grad_z, Side side) {
    EffectiveDriver e;
    e.side_ = side;
    e.custom_ = std::move(f);
    e.custom_grad_ = std::move(grad_z);
    return e;
}

double EffectiveDriver::operator()(double lambda, double z1, double z2) const {
    if (custom_) return custom_(lambda, z1, z2);
    if (side_ == Side::Seller) return -(base_.g_star(-lambda, z2) + lambda * z1);
    return base_.g_star(-lambda, -z2) - lambda * z1;
}

std::array<double, 2> EffectiveDriver::grad_z(double lambda, double z1, double z2) const {
    if (custom_) {
        if (custom_grad_) return custom_grad_(lambda, z1, z2);
        const double h1 = 1e-6 * (1.0 + std::fabs(z1));
        const double h2 = 1e-6 * (1.0 + std::fabs(z2));
        return {(custom_(lambda, z1 + h1, z2) - custom_(lambda, z1 - h1, z2)) / (2.0 * h1),
                (custom_(lambda, z1, z2 + h2) - custom_(lambda, z1, z2 - h2)) / (2.0 * h2)};
    }
    if (side_ == Side::Seller) {
        const auto gs = base_.gradient_star(-lambda, z2);
        return {-lambda, -gs[1]};
    }
    const auto gs = base_.gradient_star(-lambda, -z2);
    return {-lambda, -gs[1]};
}

EffectiveDriver effective_driver(Side side, const Driver& d) { return EffectiveDriver(side, d); }

} // namespace riskdiff
