#include <doctest.h>

#include <cmath>
#include <random>

#include <json.hpp>

#include "errors.hpp"
#include "risk.hpp"

using namespace riskdiff;

namespace {

bool flagged(const DriverChecks& dc, int id) {
    for (const auto& c : dc.conditions)
        if (c.id == id && c.violated) return true;
    return false;
}

} // namespace

TEST_CASE("entropic driver values") {
    const Driver d = entropic_driver(1.0, 0.2);
    CHECK(d.g(1.0, 1.0) == doctest::Approx(1.22).epsilon(1e-14));
    CHECK(d.g_star(1.0, 1.0) == doctest::Approx(-0.2).epsilon(1e-14));
    CHECK(std::fabs(d.g_star(1.0, 1.0) - numerical_conjugate(d, 1.0, 1.0, 50.0)) < 1e-8);

    const Driver plain = entropic_driver(1.0, 0.0);
    for (double z : {-3.0, 0.0, 0.7, 4.0}) {
        CHECK(plain.g(z, 0.0) == doctest::Approx(z * z / 2));
        CHECK(plain.g_star(z, 0.0) == doctest::Approx(z * z / 2));
    }
    CHECK_THROWS_AS(entropic_driver(0.0, 0.2), ParameterError);
    CHECK_THROWS_AS(entropic_driver(-1.0, 0.2), ParameterError);
}

TEST_CASE("numerical conjugate examples") {
    const Driver plain = entropic_driver(1.0, 0.0);
    CHECK(numerical_conjugate(plain, 2.0, 0.0, 20.0) == doctest::Approx(2.0).epsilon(1e-10));
    const Driver d = entropic_driver(1.0, 0.2);
    CHECK(numerical_conjugate(d, 0.0, 1.0, 20.0) == doctest::Approx(-0.5).epsilon(1e-10));
    // maximizer at z1 = zeta - eta z2 = 30 lies outside [-10, 10]
    CHECK_THROWS_AS(numerical_conjugate(d, 30.0, 0.0, 10.0), RadiusTooSmall);
}

TEST_CASE("closed-form conjugate agrees with the sup definition") {
    const Driver d = entropic_driver(1.7, -0.35);
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int k = 0; k < 200; ++k) {
        const double zeta = u(gen), z2 = u(gen);
        CHECK(std::fabs(d.g_star(zeta, z2) - numerical_conjugate(d, zeta, z2, 60.0)) < 1e-6);
    }
}

TEST_CASE("Fenchel-Young inequality with equality at the gradient") {
    const Driver d = entropic_driver(1.0, 0.2);
    std::mt19937_64 gen(17);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (int k = 0; k < 10000; ++k) {
        const double z1 = u(gen), z2 = u(gen), zeta = u(gen);
        REQUIRE(d.g(z1, z2) + d.g_star(zeta, z2) >= zeta * z1 - 1e-9);
        const double slope = d.gradient(z1, z2)[0];
        REQUIRE(std::fabs(d.g(z1, z2) + d.g_star(slope, z2) - slope * z1) < 1e-8 * (1 + std::fabs(slope * z1)));
    }
}

TEST_CASE("double conjugation recovers g") {
    const Driver d = entropic_driver(1.0, 0.2);
    const Driver c = conjugate_driver(d);
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int k = 0; k < 100; ++k) {
        const double z1 = u(gen), z2 = u(gen);
        CHECK(std::fabs(numerical_conjugate(c, z1, z2, 60.0) - d.g(z1, z2)) < 1e-6);
    }
}

TEST_CASE("midpoint convexity of g") {
    const Driver d = entropic_driver(2.0, 0.6);
    std::mt19937_64 gen(8);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    for (int k = 0; k < 5000; ++k) {
        const double a1 = u(gen), a2 = u(gen), b1 = u(gen), b2 = u(gen);
        REQUIRE(d.g(0.5 * (a1 + b1), 0.5 * (a2 + b2)) <= 0.5 * (d.g(a1, a2) + d.g(b1, b2)) + 1e-12);
    }
}

TEST_CASE("analytic gradients match finite differences") {
    for (const Driver& d : {entropic_driver(1.0, 0.2), quartic_driver()}) {
        for (double z1 : {-2.0, 0.3, 1.5})
            for (double z2 : {-1.0, 0.0, 2.5}) {
                const auto a = d.gradient(z1, z2);
                const auto n = central_gradient(d.g, z1, z2);
                CHECK(a[0] == doctest::Approx(n[0]).epsilon(1e-6));
                CHECK(a[1] == doctest::Approx(n[1]).epsilon(1e-6));
            }
    }
}

TEST_CASE("validate_driver certifies the entropic family and its conjugate") {
    const ValidationReport r = validate_driver(entropic_driver(1.0, 0.2), SampleBox{}, 10000);
    CHECK(r.primal.violations() == 0);
    CHECK(r.conjugate.violations() == 0);
    CHECK(r.passed());
    const auto j = nlohmann::json::parse(r.to_json());
    CHECK(j["passed"] == true);
    CHECK(j["g"]["conditions"].size() == r.primal.conditions.size());
    CHECK(j["g"]["conditions"][0].contains("worst_point"));
}

TEST_CASE("validate_driver flags a kink and super-quadratic growth") {
    Driver kink;
    kink.g = [](double z1, double) { return std::fabs(z1); };
    kink.g_star = [](double, double) { return 0.0; };
    const ValidationReport rk = validate_driver(kink, SampleBox{}, 2000);
    CHECK(flagged(rk.primal, 1));

    const ValidationReport rq = validate_driver(quartic_driver(), SampleBox{}, 10000);
    CHECK(flagged(rq.primal, 3));
    CHECK_FALSE(rq.passed());
}

TEST_CASE("effective drivers follow the canonical sign convention") {
    const Driver d = entropic_driver(1.0, 0.0);
    const EffectiveDriver sell(Side::Seller, d), buy(Side::Buyer, d);
    for (double z2 : {-2.0, 0.5, 3.0}) {
        CHECK(sell(0.0, 1.3, z2) == doctest::Approx(z2 * z2 / 2));
        CHECK(buy(0.0, 1.3, z2) == doctest::Approx(-z2 * z2 / 2));
    }
    CHECK(sell(0.0, 4.0, 0.0) == 0.0);
    CHECK(buy(0.0, 4.0, 0.0) == 0.0);

    const Driver de = entropic_driver(1.3, 0.4);
    const EffectiveDriver s2(Side::Seller, de), b2(Side::Buyer, de);
    CHECK(s2(0.3, 1.0, 2.0) == doctest::Approx(-(de.g_star(-0.3, 2.0) + 0.3 * 1.0)));
    CHECK(b2(0.3, 1.0, 2.0) == doctest::Approx(de.g_star(-0.3, -2.0) - 0.3 * 1.0));
}

TEST_CASE("seller plus buyer driver is -2 lambda z1 when eta = 0") {
    const Driver d = entropic_driver(0.8, 0.0);
    const EffectiveDriver sell(Side::Seller, d), buy(Side::Buyer, d);
    std::mt19937_64 gen(2);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int k = 0; k < 1000; ++k) {
        const double l = u(gen), z1 = u(gen), z2 = u(gen);
        REQUIRE(sell(l, z1, z2) + buy(l, z1, z2) == doctest::Approx(-2.0 * l * z1).epsilon(1e-12));
    }
}

TEST_CASE("effective driver gradients") {
    const Driver d = entropic_driver(1.0, 0.2);
    for (Side side : {Side::Seller, Side::Buyer}) {
        const EffectiveDriver f(side, d);
        for (double z2 : {-1.5, 0.0, 2.0}) {
            const auto g = f.grad_z(0.4, 0.7, z2);
            const double h = 1e-6;
            CHECK(g[0] == doctest::Approx((f(0.4, 0.7 + h, z2) - f(0.4, 0.7 - h, z2)) / (2 * h)).epsilon(1e-6));
            CHECK(g[1] == doctest::Approx((f(0.4, 0.7, z2 + h) - f(0.4, 0.7, z2 - h)) / (2 * h)).epsilon(1e-6));
        }
    }
}

TEST_CASE("side names") {
    CHECK(parse_side("seller") == Side::Seller);
    CHECK(parse_side("buyer") == Side::Buyer);
    CHECK_THROWS_AS(parse_side("broker"), ParameterError);
    CHECK(std::string(side_name(Side::Buyer)) == "buyer");
}
