#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace riskdiff {

using Fn2 = std::function<double(double, double)>;
using Grad2 = std::function<std::array<double, 2>(double, double)>;

// A convex driver g(z1, z2) together with its partial Fenchel conjugate
//   g*(zeta, z2) = sup_{z1} { zeta z1 - g(z1, z2) }.
struct Driver {
    std::string family = "custom";
    double gamma = 0.0;
    double eta = 0.0;
    Fn2 g;
    Fn2 g_star;
    Grad2 grad_g;      // optional
    Grad2 grad_g_star; // optional

    // Analytic gradient when available, else central differences with
    // h = 1e-6 (1 + |z|).
    std::array<double, 2> gradient(double z1, double z2) const;
    std::array<double, 2> gradient_star(double zeta, double z2) const;
};

// g(z1, z2) = (gamma/2)((z1 + eta z2)^2 + z2^2),
// g*(zeta, z2) = zeta^2/(2 gamma) - eta zeta z2 - (gamma/2) z2^2.
Driver entropic_driver(double gamma, double eta);

// g(z1, z2) = z1^4 + z2^2. Not strictly quadratic; used to exercise the
// failure paths of validate_driver.
Driver quartic_driver();

// The driver obtained by exchanging g and g* (valid for closed convex g,
// where g** = g).
Driver conjugate_driver(const Driver& d);

std::array<double, 2> central_gradient(const Fn2& f, double z1, double z2);

// sup_{z1 in [-radius, radius]} { zeta z1 - g(z1, z2) } by a uniform grid
// scan followed by golden-section refinement to a 1e-10 bracket. Throws
// RadiusTooSmall when the maximizer sits on the boundary.
double numerical_conjugate(const Driver& d, double zeta, double z2, double search_radius,
                           std::size_t grid_points = 2001);

struct SampleBox {
    double z1_lo = -10.0;
    double z1_hi = 10.0;
    double z2_lo = -10.0;
    double z2_hi = 10.0;
};

struct ConditionCheck {
    int id = 0;
    std::string name;
    double constant = 0.0;
    std::array<double, 2> worst_point{0.0, 0.0};
    bool violated = false;
    std::string detail;
};

struct DriverChecks {
    std::string target; // "g" or "g_star"
    std::vector<ConditionCheck> conditions;
    std::size_t violations() const;
};

struct ValidationReport {
    DriverChecks primal;
    DriverChecks conjugate;
    std::size_t n_samples = 0;
    std::size_t violations() const { return primal.violations() + conjugate.violations(); }
    bool passed() const { return violations() == 0; }
    std::string to_json() const;
};

// Numerical certification of the strictly-quadratic-with-linear-growth
// conditions for g and for g*. Growth conditions are judged by comparing
// the fitted constant on the full box with the constant on the inner
// half-size box; a ratio above kGrowthRatioLimit means the bound does not
// hold uniformly.
inline constexpr double kGrowthRatioLimit = 1.5;
ValidationReport validate_driver(const Driver& d, const SampleBox& box = {},
                                 std::size_t n_samples = 10000, std::uint64_t seed = 1);
DriverChecks check_conditions(const Fn2& f, const Grad2& grad, const std::string& target,
                              const SampleBox& box, std::size_t n_samples, std::uint64_t seed);

enum class Side { Seller, Buyer };

const char* side_name(Side side);
Side parse_side(const std::string& s);

// Sign-resolved BSDE driver f(lambda, z1, z2) in the canonical form
//   Y_u = terminal + int_u^T f ds - int_u^T Z dW.
//   seller: f = -(g*(-lambda, z2) + lambda z1)
//   buyer:  f =   g*(-lambda, -z2) - lambda z1
class EffectiveDriver {
public:
    using Fn3 = std::function<double(double, double, double)>;
    using Grad3 = std::function<std::array<double, 2>(double, double, double)>;

    EffectiveDriver(Side side, Driver base);
    // Arbitrary driver (tests, f = 0 Snell envelope checks).
    static EffectiveDriver custom(Fn3 f, Grad3 grad_z, Side side = Side::Seller);

    double operator()(double lambda, double z1, double z2) const;
    // (df/dz1, df/dz2)
    std::array<double, 2> grad_z(double lambda, double z1, double z2) const;

    Side side() const { return side_; }
    const Driver& base() const { return base_; }

private:
    EffectiveDriver() = default;
    Side side_ = Side::Seller;
    Driver base_;
    Fn3 custom_;
    Grad3 custom_grad_;
};

EffectiveDriver effective_driver(Side side, const Driver& d);

} // namespace riskdiff
