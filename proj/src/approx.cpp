#include "approx.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "binio.hpp"
#include "errors.hpp"
#include "rng.hpp"

namespace riskdiff {

const char* regressor_kind_name(RegressorKind kind) {
    switch (kind) {
    case RegressorKind::Poly: return "poly";
    case RegressorKind::Net: return "net";
    case RegressorKind::Table: return "table";
    }
    return "?";
}

RegressorKind parse_regressor_kind(const std::string& s) {
    if (s == "poly") return RegressorKind::Poly;
    if (s == "net") return RegressorKind::Net;
    if (s == "table") return RegressorKind::Table;
    throw ParameterError("unknown regressor kind '" + s + "'");
}

Standardizer Standardizer::fit(const Matrix& inputs) {
    Standardizer st;
    const auto n = static_cast<double>(inputs.rows());
    for (int c = 0; c < 2 && c < inputs.cols(); ++c) {
        const double mean = inputs.col(c).mean();
        const double var = (inputs.col(c).array() - mean).square().sum() / n;
        const double sd = std::sqrt(var);
        st.mean[c] = mean;
        st.active[c] = sd > 1e-12 * (1.0 + std::fabs(mean));
        st.scale[c] = st.active[c] ? sd : 1.0;
    }
    return st;
}

void NetConfig::validate() const {
    if (hidden.empty()) throw ParameterError("net: at least one hidden layer required");
    for (int w : hidden)
        if (w < 1) throw ParameterError("net: hidden widths must be >= 1");
    if (!(learning_rate > 0.0)) throw ParameterError("net: learning rate must be positive");
    if (batch_size < 1) throw ParameterError("net: batch size must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ParameterError("net: Adam moments must lie in [0, 1)");
    }
    if (!(epsilon >= 0.0)) throw ParameterError("net: epsilon must be non-negative");
}

std::size_t NetConfig::epochs_for(std::size_t k, std::size_t n_steps) const {
    const std::size_t first_block = n_steps > last_steps ? n_steps - last_steps : 0;
    return k < first_block ? epochs_first : epochs_last;
}

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
      m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))),
      v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))) {}

void Adam::step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad) {
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    theta.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

Mlp::Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw ParameterError("mlp: need input and output sizes");
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        offsets_.push_back(off);
        off += static_cast<std::size_t>(sizes_[l + 1]) * (static_cast<std::size_t>(sizes_[l]) + 1);
    }
    offsets_.push_back(off);
    theta_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(off));
}

std::pair<std::size_t, std::size_t> Mlp::layer_range(std::size_t l) const {
    return {offsets_[l], offsets_[l + 1] - offsets_[l]};
}

void Mlp::initialize(std::uint64_t seed, const std::array<double, 3>& head_bias) {
    const rng::CounterRng gen(seed, 0x4E7ull);
    theta_.setZero();
    for (std::size_t l = 0; l + 1 < n_layers(); ++l) {
        const auto in = static_cast<std::size_t>(sizes_[l]);
        const auto out = static_cast<std::size_t>(sizes_[l + 1]);
        const double sd = std::sqrt(2.0 / static_cast<double>(in));
        for (std::size_t k = 0; k < in * out; k += 2) {
            const auto z = gen.normals(k, static_cast<std::uint32_t>(l));
            theta_[static_cast<Eigen::Index>(offsets_[l] + k)] = sd * z[0];
            if (k + 1 < in * out) theta_[static_cast<Eigen::Index>(offsets_[l] + k + 1)] = sd * z[1];
        }
    }
    const std::size_t last = n_layers() - 1;
    const auto in = static_cast<std::size_t>(sizes_[last]);
    const std::size_t bias_off = offsets_[last] + in * 3;
    for (std::size_t k = 0; k < 3 && k < static_cast<std::size_t>(sizes_.back()); ++k) {
        theta_[static_cast<Eigen::Index>(bias_off + k)] = head_bias[k];
    }
}

namespace {

using ConstMap = Eigen::Map<const Eigen::MatrixXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

} // namespace

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd a = x;
    for (std::size_t l = 0; l < n_layers(); ++l) {
        const int in = sizes_[l];
        const int out = sizes_[l + 1];
        ConstMap w(theta_.data() + offsets_[l], out, in);
        ConstVecMap b(theta_.data() + offsets_[l] + static_cast<std::size_t>(out * in), out);
        Eigen::MatrixXd z = (w * a).colwise() + b;
        if (l + 1 < n_layers()) z = z.cwiseMax(0.0);
        a = std::move(z);
    }
    return a;
}

Eigen::MatrixXd Mlp::features(const Eigen::MatrixXd& x) const {
    Eigen::MatrixXd a = x;
    for (std::size_t l = 0; l + 1 < n_layers(); ++l) {
        const int in = sizes_[l];
        const int out = sizes_[l + 1];
        ConstMap w(theta_.data() + offsets_[l], out, in);
        ConstVecMap b(theta_.data() + offsets_[l] + static_cast<std::size_t>(out * in), out);
        a = ((w * a).colwise() + b).cwiseMax(0.0);
    }
    return a;
}

double Mlp::loss_and_gradient(const Eigen::MatrixXd& x, const std::vector<std::size_t>& samples,
                              const SampleLoss& loss, Eigen::VectorXd* grad) const {
    const auto batch = static_cast<Eigen::Index>(samples.size());
    const std::size_t layers = n_layers();
    std::vector<Eigen::MatrixXd> acts(layers + 1);
    acts[0].resize(x.rows(), batch);
    for (Eigen::Index j = 0; j < batch; ++j) {
        acts[0].col(j) = x.col(static_cast<Eigen::Index>(samples[static_cast<std::size_t>(j)]));
    }
    for (std::size_t l = 0; l < layers; ++l) {
        const int in = sizes_[l];
        const int out = sizes_[l + 1];
        ConstMap w(theta_.data() + offsets_[l], out, in);
        ConstVecMap b(theta_.data() + offsets_[l] + static_cast<std::size_t>(out * in), out);
        acts[l + 1] = (w * acts[l]).colwise() + b;
        if (l + 1 < layers) acts[l + 1] = acts[l + 1].cwiseMax(0.0);
    }

    const Eigen::MatrixXd& outputs = acts[layers];
    Eigen::MatrixXd delta(outputs.rows(), batch);
    double total = 0.0;
    const double inv_b = 1.0 / static_cast<double>(batch);
    for (Eigen::Index j = 0; j < batch; ++j) {
        const std::array<double, 3> o{outputs(0, j), outputs(1, j), outputs(2, j)};
        std::array<double, 3> g{0.0, 0.0, 0.0};
        total += loss(samples[static_cast<std::size_t>(j)], o, g);
        for (int k = 0; k < 3; ++k) delta(k, j) = g[static_cast<std::size_t>(k)] * inv_b;
    }
    const double mean_loss = total * inv_b;
    if (!grad) return mean_loss;

    grad->resize(theta_.size());
    for (std::size_t l = layers; l-- > 0;) {
        const int in = sizes_[l];
        const int out = sizes_[l + 1];
        Eigen::Map<Eigen::MatrixXd> gw(grad->data() + offsets_[l], out, in);
        Eigen::Map<Eigen::VectorXd> gb(grad->data() + offsets_[l] + static_cast<std::size_t>(out * in), out);
        gw.noalias() = delta * acts[l].transpose();
        gb = delta.rowwise().sum();
        if (l > 0) {
            ConstMap w(theta_.data() + offsets_[l], out, in);
            Eigen::MatrixXd prev = w.transpose() * delta;
            // ReLU subgradient 0 at exactly 0.
            delta = prev.cwiseProduct((acts[l].array() > 0.0).cast<double>().matrix());
        }
    }
    return mean_loss;
}

RegressorKind Regressor::kind() const {
    if (std::holds_alternative<NetModel>(model_)) return RegressorKind::Net;
    if (std::holds_alternative<TableModel>(model_)) return RegressorKind::Table;
    return RegressorKind::Poly;
}

namespace {

Eigen::MatrixXd poly_design(const PolyModel& m, const Matrix& inputs) {
    Eigen::MatrixXd x(inputs.rows(), static_cast<Eigen::Index>(m.exponents.size()));
    for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
        const double a = m.standardizer.apply(0, inputs(r, 0));
        const double b = inputs.cols() > 1 ? m.standardizer.apply(1, inputs(r, 1)) : 0.0;
        for (std::size_t t = 0; t < m.exponents.size(); ++t) {
            x(r, static_cast<Eigen::Index>(t)) =
                std::pow(a, m.exponents[t][0]) * std::pow(b, m.exponents[t][1]);
        }
    }
    return x;
}

Eigen::MatrixXd standardized_columns(const Standardizer& st, const Matrix& inputs) {
    Eigen::MatrixXd x(2, inputs.rows());
    for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
        x(0, r) = st.apply(0, inputs(r, 0));
        x(1, r) = inputs.cols() > 1 ? st.apply(1, inputs(r, 1)) : 0.0;
    }
    return x;
}

} // namespace

Eigen::MatrixXd Regressor::predict(const Matrix& inputs) const {
    if (!fitted_) throw StateError("predict: regressor is not fitted");
    if (const auto* p = poly()) {
        if (inputs.cols() < 1) throw ShapeError("predict: inputs need (S, V) columns");
        return poly_design(*p, inputs) * p->coefficients;
    }
    if (const auto* n = net()) {
        return n->net.forward(standardized_columns(n->standardizer, inputs)).transpose();
    }
    const auto* t = table();
    Eigen::MatrixXd out(inputs.rows(), 3);
    for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
        const auto key = static_cast<std::int64_t>(inputs(r, 0));
        const auto it = t->values.find(key);
        if (it == t->values.end()) throw DomainError("predict: unknown table state " + std::to_string(key));
        for (int k = 0; k < 3; ++k) out(r, k) = it->second[static_cast<std::size_t>(k)];
    }
    return out;
}

Regressor fit_poly(const Matrix& inputs, const Eigen::MatrixXd& targets, int degree) {
    if (degree < 0 || degree > 4) throw ParameterError("fit_poly: degree must be in [0, 4]");
    if (inputs.rows() != targets.rows()) throw ShapeError("fit_poly: inputs/targets row mismatch");
    PolyModel m;
    m.degree = degree;
    m.standardizer = Standardizer::fit(inputs);
    const bool use_x = m.standardizer.active[0];
    const bool use_y = inputs.cols() > 1 && m.standardizer.active[1];
    for (int total = 0; total <= degree; ++total) {
        for (int j = total; j >= 0; --j) {
            const int k = total - j;
            if ((j > 0 && !use_x) || (k > 0 && !use_y)) continue;
            m.exponents.push_back({j, k});
        }
    }
    const auto p = static_cast<Eigen::Index>(m.exponents.size());
    if (inputs.rows() < p) {
        throw FitError("fit_poly: " + std::to_string(inputs.rows()) + " samples for " +
                       std::to_string(p) + " basis functions");
    }
    const Eigen::MatrixXd x = poly_design(m, inputs);
    Eigen::MatrixXd gram = x.transpose() * x;
    const double ridge = kPolyRidge * std::max(1.0, gram.trace() / static_cast<double>(p));
    gram.diagonal().array() += ridge;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    m.condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (!(m.condition < 1e13)) {
        throw FitError("fit_poly: design rank deficient (condition " + std::to_string(m.condition) + ")",
                       m.condition);
    }
    m.coefficients = gram.ldlt().solve(x.transpose() * targets);
    return Regressor(std::move(m));
}

Regressor fit_table(const std::vector<std::int64_t>& keys, const Eigen::MatrixXd& targets) {
    if (static_cast<Eigen::Index>(keys.size()) != targets.rows()) {
        throw ShapeError("fit_table: keys/targets row mismatch");
    }
    std::map<std::int64_t, std::pair<std::array<double, 3>, std::size_t>> acc;
    for (std::size_t r = 0; r < keys.size(); ++r) {
        auto& slot = acc[keys[r]];
        for (int k = 0; k < 3 && k < targets.cols(); ++k) {
            slot.first[static_cast<std::size_t>(k)] += targets(static_cast<Eigen::Index>(r), k);
        }
        ++slot.second;
    }
    TableModel m;
    for (const auto& [key, sum] : acc) {
        std::array<double, 3> mean{};
        for (std::size_t k = 0; k < 3; ++k) mean[k] = sum.first[k] / static_cast<double>(sum.second);
        m.values.emplace(key, mean);
    }
    return Regressor(std::move(m));
}

namespace {

// The value target of sample s is phi0 - (d loss / d phi0) / 2. Only the
// value row changes, so phi1 and phi2 and hence the targets stay fixed.
void polish_value_row(Mlp& net, const Eigen::MatrixXd& x, const SampleLoss& loss) {
    const Eigen::MatrixXd h = net.features(x);
    const Eigen::MatrixXd out = net.forward(x);
    const Eigen::Index n = x.cols();
    const Eigen::Index width = h.rows();
    Eigen::MatrixXd design(n, width + 1);
    design.leftCols(width) = h.transpose();
    design.col(width).setOnes();
    Eigen::VectorXd target(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const std::array<double, 3> o{out(0, j), out(1, j), out(2, j)};
        std::array<double, 3> g{};
        loss(static_cast<std::size_t>(j), o, g);
        target[j] = o[0] - 0.5 * g[0];
    }
    const Eigen::VectorXd coef = design.completeOrthogonalDecomposition().solve(target);
    if (!coef.allFinite()) return;
    const std::size_t last = net.n_layers() - 1;
    const std::size_t off = net.layer_range(last).first;
    // Column-major W (3 x width): the value row is every third entry.
    for (Eigen::Index c = 0; c < width; ++c) net.parameters()[static_cast<Eigen::Index>(off) + 3 * c] = coef[c];
    net.parameters()[static_cast<Eigen::Index>(off) + 3 * width] = coef[width];
}

} // namespace

Regressor fit_net(const Matrix& inputs, const SampleLoss& loss, const NetConfig& config,
                  std::size_t epochs, const Regressor* warm_start,
                  const std::array<double, 3>& head_bias, std::size_t step) {
    config.validate();
    const auto n = static_cast<std::size_t>(inputs.rows());
    if (n == 0) throw ShapeError("fit_net: no samples");
    if (config.batch_size > n) throw ParameterError("fit_net: batch size exceeds sample count");

    NetModel m;
    m.standardizer = Standardizer::fit(inputs);
    std::vector<int> sizes{2};
    sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
    sizes.push_back(3);
    m.net = Mlp(sizes);
    const NetModel* warm = warm_start ? warm_start->net() : nullptr;
    if (warm && warm->net.sizes() == sizes) {
        m.net.parameters() = warm->net.parameters();
    } else {
        m.net.initialize(config.seed ^ rng::splitmix64(step), head_bias);
    }

    const Eigen::MatrixXd x = standardized_columns(m.standardizer, inputs);
    Adam adam(static_cast<std::size_t>(m.net.parameters().size()), config.learning_rate,
              config.beta1, config.beta2, config.epsilon);
    const rng::CounterRng shuffle_gen(config.seed, 0x5407ull + step);
    std::vector<std::size_t> order(n);
    std::vector<std::size_t> batch;
    Eigen::VectorXd grad;
    for (std::size_t e = 0; e < epochs; ++e) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = n - 1; i > 0; --i) {
            const std::size_t j = shuffle_gen.bits(e, static_cast<std::uint32_t>(i)) % (i + 1);
            std::swap(order[i], order[j]);
        }
        for (std::size_t lo = 0; lo < n; lo += config.batch_size) {
            const std::size_t hi = std::min(n, lo + config.batch_size);
            batch.assign(order.begin() + static_cast<std::ptrdiff_t>(lo),
                         order.begin() + static_cast<std::ptrdiff_t>(hi));
            const double l = m.net.loss_and_gradient(x, batch, loss, &grad);
            if (!std::isfinite(l) || !grad.allFinite()) {
                throw TrainingDiverged("fit_net: non-finite loss at time step " + std::to_string(step) +
                                           ", epoch " + std::to_string(e),
                                       step);
            }
            adam.step(m.net.parameters(), grad);
        }
    }
    if (config.polish_value_head) polish_value_row(m.net, x, loss);
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    m.final_loss = m.net.loss_and_gradient(x, all, loss, nullptr);
    m.epochs = epochs;
    if (!std::isfinite(m.final_loss)) {
        throw TrainingDiverged("fit_net: non-finite final loss at time step " + std::to_string(step), step);
    }
    return Regressor(std::move(m));
}

namespace {

constexpr std::uint32_t kRegressorVersion = 1;

void write_standardizer(std::ostream& out, const Standardizer& s) {
    for (int c = 0; c < 2; ++c) {
        binio::write_f64(out, s.mean[c]);
        binio::write_f64(out, s.scale[c]);
        binio::write_u32(out, s.active[c] ? 1u : 0u);
    }
}

Standardizer read_standardizer(std::istream& in) {
    Standardizer s;
    for (int c = 0; c < 2; ++c) {
        s.mean[c] = binio::read_f64(in);
        s.scale[c] = binio::read_f64(in);
        s.active[c] = binio::read_u32(in) != 0;
    }
    return s;
}

} // namespace

void Regressor::write(std::ostream& out) const {
    if (!fitted_) throw StateError("write: regressor is not fitted");
    binio::write_magic(out, "RDRG");
    binio::write_u32(out, kRegressorVersion);
    binio::write_u32(out, static_cast<std::uint32_t>(kind()));
    if (const auto* p = poly()) {
        binio::write_u32(out, static_cast<std::uint32_t>(p->degree));
        write_standardizer(out, p->standardizer);
        binio::write_u64(out, p->exponents.size());
        for (const auto& e : p->exponents) {
            binio::write_u32(out, static_cast<std::uint32_t>(e[0]));
            binio::write_u32(out, static_cast<std::uint32_t>(e[1]));
        }
        binio::write_block(out, p->coefficients);
        binio::write_f64(out, p->condition);
    } else if (const auto* nm = net()) {
        write_standardizer(out, nm->standardizer);
        binio::write_u32(out, static_cast<std::uint32_t>(nm->net.sizes().size()));
        for (int s : nm->net.sizes()) binio::write_u32(out, static_cast<std::uint32_t>(s));
        const auto& theta = nm->net.parameters();
        binio::write_u64(out, static_cast<std::uint64_t>(theta.size()));
        for (Eigen::Index i = 0; i < theta.size(); ++i) binio::write_f64(out, theta[i]);
        binio::write_f64(out, nm->final_loss);
        binio::write_u64(out, nm->epochs);
    } else if (const auto* t = table()) {
        binio::write_u64(out, t->values.size());
        for (const auto& [key, v] : t->values) {
            binio::write_u64(out, static_cast<std::uint64_t>(key));
            for (double x : v) binio::write_f64(out, x);
        }
    }
    if (!out) throw IoError("Regressor::write: stream failure");
}

Regressor Regressor::read(std::istream& in) {
    binio::expect_magic(in, "RDRG");
    if (binio::read_u32(in) != kRegressorVersion) throw IoError("RDRG: unsupported version");
    const auto kind = static_cast<RegressorKind>(binio::read_u32(in));
    switch (kind) {
    case RegressorKind::Poly: {
        PolyModel p;
        p.degree = static_cast<int>(binio::read_u32(in));
        p.standardizer = read_standardizer(in);
        const auto terms = binio::read_u64(in);
        for (std::uint64_t t = 0; t < terms; ++t) {
            const int a = static_cast<int>(binio::read_u32(in));
            const int b = static_cast<int>(binio::read_u32(in));
            p.exponents.push_back({a, b});
        }
        p.coefficients.resize(static_cast<Eigen::Index>(terms), 3);
        binio::read_block(in, p.coefficients);
        p.condition = binio::read_f64(in);
        return Regressor(std::move(p));
    }
    case RegressorKind::Net: {
        NetModel m;
        m.standardizer = read_standardizer(in);
        std::vector<int> sizes(binio::read_u32(in));
        for (auto& s : sizes) s = static_cast<int>(binio::read_u32(in));
        m.net = Mlp(sizes);
        const auto count = binio::read_u64(in);
        if (count != static_cast<std::uint64_t>(m.net.parameters().size())) {
            throw IoError("RDRG: parameter count does not match layer shapes");
        }
        for (Eigen::Index i = 0; i < m.net.parameters().size(); ++i) m.net.parameters()[i] = binio::read_f64(in);
        m.final_loss = binio::read_f64(in);
        m.epochs = binio::read_u64(in);
        return Regressor(std::move(m));
    }
    case RegressorKind::Table: {
        TableModel t;
        const auto count = binio::read_u64(in);
        for (std::uint64_t i = 0; i < count; ++i) {
            const auto key = static_cast<std::int64_t>(binio::read_u64(in));
            std::array<double, 3> v{};
            for (auto& x : v) x = binio::read_f64(in);
            t.values.emplace(key, v);
        }
        return Regressor(std::move(t));
    }
    }
    throw IoError("RDRG: unknown regressor kind");
}

} // namespace riskdiff
