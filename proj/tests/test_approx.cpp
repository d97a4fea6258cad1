#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "approx.hpp"
#include "errors.hpp"

using namespace riskdiff;

namespace {

Matrix random_inputs(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> s(100.0, 10.0), v(0.1, 0.5);
    Matrix x(static_cast<Eigen::Index>(n), 2);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        x(i, 0) = s(gen);
        x(i, 1) = v(gen);
    }
    return x;
}

// Relative error between analytic and central-difference gradients at
// random coordinates of every layer.
double gradient_check(std::uint64_t seed) {
    Mlp net({2, 32, 32, 3});
    net.initialize(seed, {0.3, -0.2, 0.1});
    std::mt19937_64 gen(seed + 99);
    std::normal_distribution<double> n01(0.0, 1.0);
    // Perturb so that the zero-initialized head also carries signal.
    for (Eigen::Index i = 0; i < net.parameters().size(); ++i) net.parameters()[i] += 0.1 * n01(gen);
    Eigen::MatrixXd x(2, 64);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = n01(gen);
    std::vector<double> t0(64), t1(64), t2(64);
    for (int i = 0; i < 64; ++i) {
        t0[i] = n01(gen);
        t1[i] = n01(gen);
        t2[i] = n01(gen);
    }
    std::vector<std::size_t> samples(64);
    for (std::size_t i = 0; i < 64; ++i) samples[i] = i;
    const SampleLoss loss = [&](std::size_t s, const std::array<double, 3>& o, std::array<double, 3>& g) {
        const double e0 = o[0] - t0[s], e1 = o[1] - t1[s], e2 = o[2] * o[1] - t2[s];
        g = {2 * e0, 2 * e1 + 2 * e2 * o[2], 2 * e2 * o[1]};
        return e0 * e0 + e1 * e1 + e2 * e2;
    };
    Eigen::VectorXd grad;
    net.loss_and_gradient(x, samples, loss, &grad);
    double worst = 0.0;
    std::uniform_int_distribution<std::size_t> pick;
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
        const auto [off, cnt] = net.layer_range(l);
        for (int k = 0; k < 10; ++k) {
            const std::size_t idx = off + pick(gen) % cnt;
            const double h = 1e-6 * (1.0 + std::fabs(net.parameters()[idx]));
            const double keep = net.parameters()[idx];
            net.parameters()[idx] = keep + h;
            const double up = net.loss_and_gradient(x, samples, loss, nullptr);
            net.parameters()[idx] = keep - h;
            const double dn = net.loss_and_gradient(x, samples, loss, nullptr);
            net.parameters()[idx] = keep;
            const double fd = (up - dn) / (2 * h);
            const double scale = std::fabs(fd) + std::fabs(grad[idx]);
            if (scale < 1e-12) continue;
            worst = std::max(worst, std::fabs(fd - grad[idx]) / scale);
        }
    }
    return worst;
}

} // namespace

TEST_CASE("polynomial regression recovers a quadratic exactly") {
    const Matrix x = random_inputs(400, 1);
    Eigen::MatrixXd t(400, 3);
    for (Eigen::Index i = 0; i < 400; ++i) {
        const double s = x(i, 0), v = x(i, 1);
        t(i, 0) = 1.0 + 0.5 * s - 0.01 * s * s + 3.0 * v * s;
        t(i, 1) = -2.0 + v * v;
        t(i, 2) = 7.0;
    }
    const Regressor r = fit_poly(x, t, 2);
    REQUIRE(r.fitted());
    CHECK(r.kind() == RegressorKind::Poly);
    const Eigen::MatrixXd p = r.predict(x);
    CHECK((p - t).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("polynomial regression degenerate cases") {
    const Matrix x = random_inputs(4, 2);
    CHECK_THROWS_AS(fit_poly(x, Eigen::MatrixXd::Zero(4, 3), 2), FitError);
    Matrix flat = random_inputs(50, 3);
    flat.col(1).setConstant(0.15);
    Eigen::MatrixXd t(50, 3);
    t.col(0) = flat.col(0);
    t.col(1).setConstant(1.0);
    t.col(2).setZero();
    const Regressor r = fit_poly(flat, t, 1);
    // Targets are of order 100; the constant column makes the design rank deficient.
    CHECK((r.predict(flat) - t).cwiseAbs().maxCoeff() < 1e-6);
    CHECK_THROWS_AS(fit_poly(x, Eigen::MatrixXd::Zero(4, 3), 5), ParameterError);
}

TEST_CASE("table regression returns group means") {
    const std::vector<std::int64_t> keys{3, 3, 5, 5, 5, 9};
    Eigen::MatrixXd t(6, 3);
    t << 1, 2, 3, 3, 4, 5, 0, 0, 0, 3, 3, 3, 6, 6, 6, 7, 8, 9;
    const Regressor r = fit_table(keys, t);
    Matrix q(3, 1);
    q << 3, 5, 9;
    const Eigen::MatrixXd p = r.predict(q);
    CHECK(p(0, 0) == 2.0);
    CHECK(p(0, 2) == 4.0);
    CHECK(p(1, 1) == 3.0);
    CHECK(p(2, 2) == 9.0);
    Matrix unknown(1, 1);
    unknown << 4;
    CHECK_THROWS_AS(r.predict(unknown), DomainError);
}

TEST_CASE("unfitted regressors refuse to predict") {
    const Regressor r;
    CHECK_FALSE(r.fitted());
    CHECK_THROWS_AS(r.predict(Matrix::Zero(1, 2)), StateError);
}

TEST_CASE("Adam first step") {
    Eigen::VectorXd theta(1);
    theta << 1.0;
    Eigen::VectorXd g(1);
    g << 1.0;
    Adam exact(1, 0.01, 0.9, 0.999, 0.0);
    exact.step(theta, g);
    CHECK(std::fabs(theta[0] - 0.99) < 1e-12);

    theta << 1.0;
    Adam adam(1, 0.01, 0.9, 0.999, 1e-8);
    adam.step(theta, g);
    CHECK(std::fabs(theta[0] - (1.0 - 0.01 * 1.0 / (1.0 + 1e-8))) < 1e-15);
    CHECK(adam.iterations() == 1);
}

TEST_CASE("Adam minimizes a quadratic") {
    Eigen::VectorXd theta = Eigen::VectorXd::Constant(3, 5.0);
    Adam adam(3, 0.05, 0.9, 0.999, 1e-8);
    for (int k = 0; k < 3000; ++k) {
        const Eigen::VectorXd g = 2.0 * (theta - Eigen::VectorXd::LinSpaced(3, -1, 1));
        adam.step(theta, g);
    }
    CHECK((theta - Eigen::VectorXd::LinSpaced(3, -1, 1)).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("network initialization") {
    Mlp net({2, 32, 32, 3});
    net.initialize(7, {1.5, -0.5, 0.25});
    CHECK(net.parameters().size() == (2 * 32 + 32) + (32 * 32 + 32) + (32 * 3 + 3));
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(2, 5);
    const Eigen::MatrixXd out = net.forward(x);
    for (Eigen::Index j = 0; j < 5; ++j) {
        CHECK(out(0, j) == 1.5);
        CHECK(out(1, j) == -0.5);
        CHECK(out(2, j) == 0.25);
    }
    Mlp again({2, 32, 32, 3});
    again.initialize(7, {1.5, -0.5, 0.25});
    CHECK(again.parameters() == net.parameters());
}

TEST_CASE("backprop matches central differences") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        CAPTURE(seed);
        CHECK(gradient_check(seed) < 1e-4);
    }
}

TEST_CASE("net fit is deterministic and reduces the loss") {
    const Matrix x = random_inputs(600, 4);
    Eigen::VectorXd target(600);
    for (Eigen::Index i = 0; i < 600; ++i) target[i] = 0.05 * (x(i, 0) - 100.0) + std::sin(x(i, 1));
    const SampleLoss loss = [&](std::size_t s, const std::array<double, 3>& o, std::array<double, 3>& g) {
        const double e = o[0] - target[static_cast<Eigen::Index>(s)];
        g = {2 * e, 2 * o[1], 2 * o[2]};
        return e * e + o[1] * o[1] + o[2] * o[2];
    };
    NetConfig cfg;
    cfg.batch_size = 100;
    const Regressor a = fit_net(x, loss, cfg, 60, nullptr, {0.0, 0.0, 0.0});
    const Regressor b = fit_net(x, loss, cfg, 60, nullptr, {0.0, 0.0, 0.0});
    REQUIRE(a.net());
    CHECK(a.net()->net.parameters() == b.net()->net.parameters());
    const double var = (target.array() - target.mean()).square().mean();
    CHECK(a.net()->final_loss < 0.2 * var);
    CHECK(a.net()->epochs == 60);

    const Regressor warm = fit_net(x, loss, cfg, 1, &a, {0.0, 0.0, 0.0});
    CHECK(warm.net()->final_loss < 0.3 * var);

    cfg.batch_size = 1000;
    CHECK_THROWS(fit_net(x, loss, cfg, 1, nullptr, {0.0, 0.0, 0.0}));
}

TEST_CASE("divergent training is reported") {
    const Matrix x = random_inputs(200, 6);
    const SampleLoss loss = [&](std::size_t, const std::array<double, 3>&, std::array<double, 3>& g) {
        g = {NAN, 0.0, 0.0};
        return NAN;
    };
    NetConfig cfg;
    cfg.batch_size = 50;
    CHECK_THROWS_AS(fit_net(x, loss, cfg, 2, nullptr, {0.0, 0.0, 0.0}, 4), TrainingDiverged);
}

TEST_CASE("regressor serialization round trip") {
    const Matrix x = random_inputs(100, 7);
    Eigen::MatrixXd t = Eigen::MatrixXd::Random(100, 3);
    const Regressor poly = fit_poly(x, t, 3);
    std::stringstream ss;
    poly.write(ss);
    CHECK(ss.str().substr(0, 4) == "RDRG");
    const Regressor back = Regressor::read(ss);
    CHECK(back.predict(x) == poly.predict(x));

    const SampleLoss loss = [](std::size_t, const std::array<double, 3>& o, std::array<double, 3>& g) {
        g = {2 * o[0], 2 * o[1], 2 * o[2]};
        return o[0] * o[0] + o[1] * o[1] + o[2] * o[2];
    };
    NetConfig cfg;
    cfg.batch_size = 50;
    const Regressor net = fit_net(x, loss, cfg, 2, nullptr, {1.0, 0.0, 0.0});
    std::stringstream sn;
    net.write(sn);
    CHECK(Regressor::read(sn).predict(x) == net.predict(x));

    const Regressor table = fit_table({1, 2}, Eigen::MatrixXd::Ones(2, 3));
    std::stringstream st;
    table.write(st);
    Matrix q(1, 1);
    q << 2;
    CHECK(Regressor::read(st).predict(q) == table.predict(q));
}

TEST_CASE("epoch schedule") {
    NetConfig cfg;
    cfg.epochs_first = 1000;
    cfg.epochs_last = 300;
    cfg.last_steps = 5;
    // k counts backward steps from maturity; with N = 10 the steps nearest
    // to t = 0 get the reduced count.
    CHECK(cfg.epochs_for(0, 10) == 1000);
    CHECK(cfg.epochs_for(4, 10) == 1000);
    CHECK(cfg.epochs_for(5, 10) == 300);
    CHECK(cfg.epochs_for(9, 10) == 300);
    cfg.learning_rate = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ParameterError);
}
