#include "experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "errors.hpp"
#include "oracle.hpp"
#include "quote.hpp"

namespace riskdiff {

using nlohmann::json;
namespace fs = std::filesystem;

MarketModel ExperimentConfig::market() const {
    ArctanParams p{model.a, model.b, model.alpha, model.m, model.nu};
    return MarketModel::arctangent(model.r, model.mu, p, model.rho, model.s0, model.v0);
}

TimeGrid ExperimentConfig::grid() const { return TimeGrid(maturity, steps); }

Driver ExperimentConfig::make_driver() const {
    if (driver.family == "entropic") return entropic_driver(driver.gamma, driver.eta);
    if (driver.family == "quartic") return quartic_driver();
    throw ConfigError("driver.family: unknown family '" + driver.family + "'");
}

Payoff ExperimentConfig::make_payoff(double strike) const {
    if (payoff.kind == "put") return Payoff::put(strike, model.r);
    if (payoff.kind == "call") return Payoff::call(strike, model.r);
    if (payoff.kind == "zero") {
        Payoff z = Payoff::zero();
        z.strike = strike;
        return z;
    }
    throw ConfigError("payoff.kind: unknown kind '" + payoff.kind + "'");
}

std::vector<Payoff> ExperimentConfig::payoffs() const {
    std::vector<Payoff> out;
    for (double k : payoff.strikes) out.push_back(make_payoff(k));
    return out;
}

void ExperimentConfig::check() const {
    const auto fail = [](const std::string& field, const std::string& why) {
        throw ConfigError("field '" + field + "': " + why);
    };
    if (!(model.b > 0.0)) fail("model.b", "must be positive");
    if (!(model.a >= 0.0)) fail("model.a", "must be nonnegative");
    if (!(std::fabs(model.rho) <= 1.0)) fail("model.rho", "must lie in [-1, 1]");
    if (!(model.s0 > 0.0)) fail("model.s0", "must be positive");
    if (!(model.alpha >= 0.0)) fail("model.alpha", "must be nonnegative");
    if (!(maturity > 0.0)) fail("grid.T", "must be positive");
    if (steps < 1) fail("grid.N", "must be at least 1");
    if (driver.family != "entropic" && driver.family != "quartic") fail("driver.family", "expected entropic or quartic");
    if (driver.family == "entropic" && !(driver.gamma > 0.0)) fail("driver.gamma", "must be positive");
    if (payoff.kind != "put" && payoff.kind != "call" && payoff.kind != "zero") {
        fail("payoff.kind", "expected put, call or zero");
    }
    if (payoff.strikes.empty()) fail("payoff.strikes", "must not be empty");
    for (double k : payoff.strikes)
        if (!(k > 0.0)) fail("payoff.strikes", "strikes must be positive");
    if (n_paths < 1) fail("solver.n_paths", "must be at least 1");
    if (solver.poly_degree < 0 || solver.poly_degree > 4) fail("solver.poly_degree", "must be in 0..4");
    if (solver.jackknife_folds < 2) fail("solver.jackknife_folds", "must be at least 2");
    if (solver.kind == RegressorKind::Table && steps > kMaxTreeSteps) {
        fail("solver.regressor", "table regression runs on the tree and needs grid.N <= 8");
    }
    if (solver.kind == RegressorKind::Net) {
        try {
            solver.net.validate();
        } catch (const Error& e) {
            fail("solver.net", e.what());
        }
        if (solver.net.batch_size > n_paths) fail("solver.net.batch_size", "exceeds solver.n_paths");
    }
    if (!(validate.box > 0.0)) fail("validate.box", "must be positive");
    if (validate.n_samples < 1) fail("validate.n_samples", "must be at least 1");
    for (auto n : validate.oracle_steps)
        if (n < 1 || n > kMaxTreeSteps) fail("validate.oracle_steps", "entries must be in 1..8");
}

std::vector<std::string> preset_names() { return {"paper-fig1", "paper-fig1-lite"}; }

ExperimentConfig preset(const std::string& name) {
    ExperimentConfig c;
    c.name = name;
    c.solver.kind = RegressorKind::Net;
    c.solver.net.batch_size = 1100;
    c.solver.net.learning_rate = 0.01;
    c.solver.net.last_steps = 5;
    c.output.dir = "out/" + name;
    if (name == "paper-fig1") {
        c.solver.net.epochs_first = 1000;
        c.solver.net.epochs_last = 300;
        c.n_paths = 8192;
    } else if (name == "paper-fig1-lite") {
        c.solver.net.epochs_first = 200;
        c.solver.net.epochs_last = 100;
        c.n_paths = 4096;
    } else {
        throw ConfigError("unknown preset '" + name + "'");
    }
    return c;
}

namespace {

void reject_unknown(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) throw ConfigError("field '" + path + "': expected an object");
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw ConfigError("unknown key '" + (path.empty() ? it.key() : path + "." + it.key()) + "'");
        }
    }
}

std::string join(const std::string& path, const char* key) { return path.empty() ? key : path + "." + key; }

void read_number(const json& obj, const std::string& path, const char* key, double& out) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_number()) throw ConfigError("field '" + join(path, key) + "': expected a number");
    out = v.get<double>();
}

template <typename T>
void read_count(const json& obj, const std::string& path, const char* key, T& out) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
        throw ConfigError("field '" + join(path, key) + "': expected a nonnegative integer");
    }
    out = static_cast<T>(v.get<unsigned long long>());
}

void read_bool(const json& obj, const std::string& path, const char* key, bool& out) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_boolean()) throw ConfigError("field '" + join(path, key) + "': expected true or false");
    out = v.get<bool>();
}

void read_string(const json& obj, const std::string& path, const char* key, std::string& out) {
    if (!obj.contains(key)) return;
    const auto& v = obj.at(key);
    if (!v.is_string()) throw ConfigError("field '" + join(path, key) + "': expected a string");
    out = v.get<std::string>();
}

std::string locate(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

} // namespace

ExperimentConfig parse_config(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("malformed JSON at " + locate(text, e.byte) + ": " + e.what());
    }
    reject_unknown(doc, "", {"preset", "name", "model", "grid", "driver", "payoff", "solver", "output", "validate"});
    ExperimentConfig c;
    if (doc.contains("preset")) {
        std::string name;
        read_string(doc, "", "preset", name);
        c = preset(name);
    }
    read_string(doc, "", "name", c.name);
    if (doc.contains("model")) {
        const auto& m = doc["model"];
        reject_unknown(m, "model", {"r", "mu", "a", "b", "alpha", "m", "nu", "rho", "s0", "v0"});
        read_number(m, "model", "r", c.model.r);
        read_number(m, "model", "mu", c.model.mu);
        read_number(m, "model", "a", c.model.a);
        read_number(m, "model", "b", c.model.b);
        read_number(m, "model", "alpha", c.model.alpha);
        read_number(m, "model", "m", c.model.m);
        read_number(m, "model", "nu", c.model.nu);
        read_number(m, "model", "rho", c.model.rho);
        read_number(m, "model", "s0", c.model.s0);
        read_number(m, "model", "v0", c.model.v0);
    }
    if (doc.contains("grid")) {
        const auto& g = doc["grid"];
        reject_unknown(g, "grid", {"T", "N"});
        read_number(g, "grid", "T", c.maturity);
        read_count(g, "grid", "N", c.steps);
    }
    if (doc.contains("driver")) {
        const auto& d = doc["driver"];
        reject_unknown(d, "driver", {"family", "gamma", "eta"});
        read_string(d, "driver", "family", c.driver.family);
        read_number(d, "driver", "gamma", c.driver.gamma);
        read_number(d, "driver", "eta", c.driver.eta);
    }
    if (doc.contains("payoff")) {
        const auto& p = doc["payoff"];
        reject_unknown(p, "payoff", {"kind", "strikes"});
        read_string(p, "payoff", "kind", c.payoff.kind);
        if (p.contains("strikes")) {
            const auto& s = p["strikes"];
            if (!s.is_array()) throw ConfigError("field 'payoff.strikes': expected an array of numbers");
            c.payoff.strikes.clear();
            for (const auto& k : s) {
                if (!k.is_number()) throw ConfigError("field 'payoff.strikes': expected an array of numbers");
                c.payoff.strikes.push_back(k.get<double>());
            }
        }
    }
    if (doc.contains("solver")) {
        const auto& s = doc["solver"];
        reject_unknown(s, "solver",
                       {"regressor", "poly_degree", "n_paths", "seed", "double_solve", "reflect_in_loss",
                        "jackknife_folds", "net"});
        if (s.contains("regressor")) {
            std::string kind;
            read_string(s, "solver", "regressor", kind);
            try {
                c.solver.kind = parse_regressor_kind(kind);
            } catch (const Error& e) {
                throw ConfigError(std::string("field 'solver.regressor': ") + e.what());
            }
        }
        read_count(s, "solver", "poly_degree", c.solver.poly_degree);
        read_count(s, "solver", "n_paths", c.n_paths);
        read_count(s, "solver", "seed", c.seed);
        read_bool(s, "solver", "double_solve", c.solver.double_solve);
        read_bool(s, "solver", "reflect_in_loss", c.solver.reflect_in_loss);
        read_count(s, "solver", "jackknife_folds", c.solver.jackknife_folds);
        if (s.contains("net")) {
            const auto& n = s["net"];
            auto& net = c.solver.net;
            reject_unknown(n, "solver.net",
                           {"hidden", "epochs_first", "epochs_last", "last_steps", "batch_size", "learning_rate",
                            "beta1", "beta2", "epsilon", "seed", "warm_start", "polish_value_head"});
            if (n.contains("hidden")) {
                const auto& h = n["hidden"];
                if (!h.is_array()) throw ConfigError("field 'solver.net.hidden': expected an array of widths");
                net.hidden.clear();
                for (const auto& w : h) {
                    if (!w.is_number_integer() || w.get<long long>() < 1) {
                        throw ConfigError("field 'solver.net.hidden': widths must be positive integers");
                    }
                    net.hidden.push_back(w.get<int>());
                }
            }
            read_count(n, "solver.net", "epochs_first", net.epochs_first);
            read_count(n, "solver.net", "epochs_last", net.epochs_last);
            read_count(n, "solver.net", "last_steps", net.last_steps);
            read_count(n, "solver.net", "batch_size", net.batch_size);
            read_number(n, "solver.net", "learning_rate", net.learning_rate);
            read_number(n, "solver.net", "beta1", net.beta1);
            read_number(n, "solver.net", "beta2", net.beta2);
            read_number(n, "solver.net", "epsilon", net.epsilon);
            read_count(n, "solver.net", "seed", net.seed);
            read_bool(n, "solver.net", "warm_start", net.warm_start);
            read_bool(n, "solver.net", "polish_value_head", net.polish_value_head);
        }
    }
    if (doc.contains("output")) {
        const auto& o = doc["output"];
        reject_unknown(o, "output", {"dir", "svg", "european", "compare"});
        read_string(o, "output", "dir", c.output.dir);
        read_bool(o, "output", "svg", c.output.svg);
        read_bool(o, "output", "european", c.output.european);
        read_bool(o, "output", "compare", c.output.compare);
    }
    if (doc.contains("validate")) {
        const auto& v = doc["validate"];
        reject_unknown(v, "validate", {"box", "n_samples", "oracle_steps"});
        read_number(v, "validate", "box", c.validate.box);
        read_count(v, "validate", "n_samples", c.validate.n_samples);
        if (v.contains("oracle_steps")) {
            const auto& a = v["oracle_steps"];
            if (!a.is_array()) throw ConfigError("field 'validate.oracle_steps': expected an array of integers");
            c.validate.oracle_steps.clear();
            for (const auto& n : a) {
                if (!n.is_number_integer() || n.get<long long>() < 1) {
                    throw ConfigError("field 'validate.oracle_steps': expected positive integers");
                }
                c.validate.oracle_steps.push_back(n.get<std::size_t>());
            }
        }
    }
    c.check();
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& c) {
    const auto& n = c.solver.net;
    json doc = {
        {"name", c.name},
        {"model",
         {{"r", c.model.r}, {"mu", c.model.mu}, {"a", c.model.a}, {"b", c.model.b}, {"alpha", c.model.alpha},
          {"m", c.model.m}, {"nu", c.model.nu}, {"rho", c.model.rho}, {"s0", c.model.s0}, {"v0", c.model.v0}}},
        {"grid", {{"T", c.maturity}, {"N", c.steps}}},
        {"driver", {{"family", c.driver.family}, {"gamma", c.driver.gamma}, {"eta", c.driver.eta}}},
        {"payoff", {{"kind", c.payoff.kind}, {"strikes", c.payoff.strikes}}},
        {"solver",
         {{"regressor", regressor_kind_name(c.solver.kind)},
          {"poly_degree", c.solver.poly_degree},
          {"n_paths", c.n_paths},
          {"seed", c.seed},
          {"double_solve", c.solver.double_solve},
          {"reflect_in_loss", c.solver.reflect_in_loss},
          {"jackknife_folds", c.solver.jackknife_folds},
          {"net",
           {{"hidden", n.hidden},
            {"epochs_first", n.epochs_first},
            {"epochs_last", n.epochs_last},
            {"last_steps", n.last_steps},
            {"batch_size", n.batch_size},
            {"learning_rate", n.learning_rate},
            {"beta1", n.beta1},
            {"beta2", n.beta2},
            {"epsilon", n.epsilon},
            {"seed", n.seed},
            {"warm_start", n.warm_start},
            {"polish_value_head", n.polish_value_head}}}}},
        {"output",
         {{"dir", c.output.dir}, {"svg", c.output.svg}, {"european", c.output.european}, {"compare", c.output.compare}}},
        {"validate", {{"box", c.validate.box}, {"n_samples", c.validate.n_samples}, {"oracle_steps", c.validate.oracle_steps}}},
    };
    return doc.dump(2);
}

std::vector<Side> parse_sides(const std::string& s) {
    if (s == "both") return {Side::Buyer, Side::Seller};
    return {parse_side(s)};
}

namespace {

std::string num(double x) {
    if (std::isnan(x)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

const PricingResult* find_side(const std::vector<PricingResult>& v, Side side) {
    for (const auto& r : v)
        if (r.side == side) return &r;
    return nullptr;
}

PropertyCheck make_check(std::string name, double strike, Side side, double value, double se,
                         double multiple, double exact_tol) {
    PropertyCheck c;
    c.name = std::move(name);
    c.strike = strike;
    c.side = side_name(side);
    c.value = value;
    c.tolerance = multiple * se + exact_tol;
    c.passed = value >= -c.tolerance;
    return c;
}

} // namespace

std::vector<PropertyCheck> smile_properties(const std::vector<SmileRow>& rows, const std::vector<Side>& sides,
                                            double s0, double se_spread, double se_floor, double se_monotone,
                                            double se_european, double exact_tol) {
    std::vector<PropertyCheck> out;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& row = rows[k];
        const PricingResult* sell = find_side(row.american, Side::Seller);
        const PricingResult* buy = find_side(row.american, Side::Buyer);
        if (sell && buy) {
            PropertyCheck c = make_check("bid_ask_spread", row.strike, Side::Seller, sell->price - buy->price,
                                         joint_std_error(*sell, *buy), se_spread, exact_tol);
            c.side = "both";
            out.push_back(c);
        }
        for (Side side : sides) {
            const PricingResult* r = find_side(row.american, side);
            if (!r) continue;
            const double intrinsic = std::max(row.strike - s0, 0.0);
            out.push_back(make_check("price_floor", row.strike, side, r->price - intrinsic, r->mc_std_error,
                                     se_floor, exact_tol));
            if (k > 0) {
                const PricingResult* prev = find_side(rows[k - 1].american, side);
                if (prev) {
                    out.push_back(make_check("strike_monotone", row.strike, side, r->price - prev->price,
                                             joint_std_error(*r, *prev), se_monotone, exact_tol));
                }
            }
            if (const PricingResult* e = find_side(row.european, side)) {
                out.push_back(make_check("american_ge_european", row.strike, side, r->price - e->price,
                                         joint_std_error(*r, *e), se_european, exact_tol));
            }
        }
    }
    return out;
}

namespace {

PathBundle make_bundle(const ExperimentConfig& cfg, const MarketModel& model) {
    if (cfg.solver.kind == RegressorKind::Table) return tree_path_bundle(build_tree(model, cfg.grid()));
    return simulate(model, cfg.grid(), cfg.n_paths, cfg.seed);
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p);
    if (!out) throw IoError("cannot write '" + p.string() + "'");
    return out;
}

const char* results_header = "strike,side,price,risk_with_claim,risk_without,mc_std_error,N,n_paths,seed,regressor_kind\n";

void write_result_row(std::ostream& out, const PricingResult& r) {
    out << num(r.strike) << ',' << side_name(r.side) << ',' << num(r.price) << ',' << num(r.risk_with_claim) << ','
        << num(r.risk_without) << ',' << num(r.mc_std_error) << ',' << r.steps << ',' << r.n_paths << ',' << r.seed
        << ',' << regressor_kind_name(r.regressor) << '\n';
}

double implied_or_nan(const ExperimentConfig& cfg, double strike, double price) {
    try {
        Quote q;
        q.spot = cfg.model.s0;
        q.strike = strike;
        q.rate = cfg.model.r;
        q.maturity = cfg.maturity;
        q.price = price;
        q.side = cfg.payoff.kind == "call" ? OptionSide::Call : OptionSide::Put;
        return implied_vol(q);
    } catch (const Error&) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

using Series = std::vector<std::pair<double, double>>;

void write_dat(const fs::path& p, const Series& s) {
    auto out = open_out(p);
    for (const auto& [x, y] : s)
        if (std::isfinite(x) && std::isfinite(y)) out << num(x) << ' ' << num(y) << '\n';
}

struct Panel {
    std::string title;
    std::string xlabel;
    std::vector<std::pair<std::string, Series>> series;
};

void write_svg(const fs::path& p, const std::vector<Panel>& panels) {
    const double w = 360, h = 280, ml = 60, mr = 15, mt = 30, mb = 45;
    auto out = open_out(p);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w * static_cast<double>(panels.size())
        << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
    for (std::size_t k = 0; k < panels.size(); ++k) {
        const auto& panel = panels[k];
        double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
        for (const auto& [name, s] : panel.series)
            for (const auto& [x, y] : s) {
                if (!std::isfinite(x) || !std::isfinite(y)) continue;
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
            }
        if (!std::isfinite(x0)) continue;
        if (x1 == x0) x1 = x0 + 1;
        if (y1 == y0) y1 = y0 + 1;
        const double ox = w * static_cast<double>(k);
        const auto px = [&](double x) { return ox + ml + (x - x0) / (x1 - x0) * (w - ml - mr); };
        const auto py = [&](double y) { return mt + (y1 - y) / (y1 - y0) * (h - mt - mb); };
        out << "<text x=\"" << ox + w / 2 << "\" y=\"18\" text-anchor=\"middle\">" << panel.title << "</text>\n";
        out << "<rect x=\"" << ox + ml << "\" y=\"" << mt << "\" width=\"" << w - ml - mr << "\" height=\""
            << h - mt - mb << "\" fill=\"none\" stroke=\"#444\"/>\n";
        out << "<text x=\"" << ox + ml << "\" y=\"" << h - mb + 14 << "\">" << num(x0) << "</text>\n";
        out << "<text x=\"" << ox + w - mr << "\" y=\"" << h - mb + 14 << "\" text-anchor=\"end\">" << num(x1)
            << "</text>\n";
        out << "<text x=\"" << ox + w / 2 << "\" y=\"" << h - 8 << "\" text-anchor=\"middle\">" << panel.xlabel
            << "</text>\n";
        out << "<text x=\"" << ox + ml - 4 << "\" y=\"" << mt + 4 << "\" text-anchor=\"end\">" << num(y1)
            << "</text>\n";
        out << "<text x=\"" << ox + ml - 4 << "\" y=\"" << h - mb << "\" text-anchor=\"end\">" << num(y0)
            << "</text>\n";
        for (std::size_t s = 0; s < panel.series.size(); ++s) {
            const auto& [name, pts] = panel.series[s];
            out << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" << colors[s % 4] << "\" points=\"";
            for (const auto& [x, y] : pts)
                if (std::isfinite(x) && std::isfinite(y)) out << px(x) << ',' << py(y) << ' ';
            out << "\"/>\n";
            out << "<text x=\"" << ox + ml + 8 << "\" y=\"" << mt + 14 + 13 * static_cast<double>(s) << "\" fill=\""
                << colors[s % 4] << "\">" << name << "</text>\n";
        }
    }
    out << "</svg>\n";
}

} // namespace

SmileOutcome run_smile(const ExperimentConfig& cfg, const std::vector<Side>& sides) {
    cfg.check();
    const auto t0 = std::chrono::steady_clock::now();
    const MarketModel model = cfg.market();
    const Driver driver = cfg.make_driver();
    const PathBundle bundle = make_bundle(cfg, model);

    SmileOutcome res;
    res.sides = sides;
    res.rows = smile(sides, model, cfg.payoffs(), driver, bundle, cfg.solver, cfg.output.european);
    res.properties = smile_properties(res.rows, sides, cfg.model.s0);

    const fs::path dir(cfg.output.dir);
    fs::create_directories(dir);
    const auto track = [&](const fs::path& p) {
        res.files.push_back(p.string());
        return p;
    };

    std::vector<double> iv_buy(res.rows.size()), iv_sell(res.rows.size());
    {
        auto out = open_out(track(dir / "smile.csv"));
        out << "strike,log_moneyness,price_buyer,price_seller,iv_buyer,iv_seller,se_buyer,se_seller\n";
        for (std::size_t k = 0; k < res.rows.size(); ++k) {
            const auto& row = res.rows[k];
            const auto* b = find_side(row.american, Side::Buyer);
            const auto* s = find_side(row.american, Side::Seller);
            iv_buy[k] = b ? implied_or_nan(cfg, row.strike, b->price) : std::numeric_limits<double>::quiet_NaN();
            iv_sell[k] = s ? implied_or_nan(cfg, row.strike, s->price) : std::numeric_limits<double>::quiet_NaN();
            out << num(row.strike) << ',' << num(std::log(row.strike / cfg.model.s0)) << ','
                << (b ? num(b->price) : "") << ',' << (s ? num(s->price) : "") << ',' << (b ? num(iv_buy[k]) : "")
                << ',' << (s ? num(iv_sell[k]) : "") << ',' << (b ? num(b->mc_std_error) : "") << ','
                << (s ? num(s->mc_std_error) : "") << '\n';
        }
    }
    {
        auto out = open_out(track(dir / "results.csv"));
        out << results_header;
        for (const auto& row : res.rows)
            for (const auto& r : row.american) write_result_row(out, r);
    }
    if (cfg.output.european) {
        auto out = open_out(track(dir / "european.csv"));
        out << results_header;
        for (const auto& row : res.rows)
            for (const auto& r : row.european) write_result_row(out, r);
    }
    {
        auto out = open_out(track(dir / "replicates.csv"));
        out << "strike,side,exercise,fold,value\n";
        for (const auto& row : res.rows) {
            for (const auto* group : {&row.american, &row.european})
                for (const auto& r : *group)
                    for (std::size_t f = 0; f < r.replicates.size(); ++f) {
                        out << num(r.strike) << ',' << side_name(r.side) << ','
                            << (r.american ? "american" : "european") << ',' << f << ',' << num(r.replicates[f])
                            << '\n';
                    }
        }
    }
    {
        auto out = open_out(track(dir / "properties.csv"));
        out << "property,strike,side,value,tolerance,passed\n";
        for (const auto& p : res.properties) {
            out << p.name << ',' << num(p.strike) << ',' << p.side << ',' << num(p.value) << ',' << num(p.tolerance)
                << ',' << (p.passed ? "true" : "false") << '\n';
        }
    }

    Series price_b, price_s, iv_b, iv_s, amer_b, euro_b;
    for (std::size_t k = 0; k < res.rows.size(); ++k) {
        const auto& row = res.rows[k];
        const double lm = std::log(row.strike / cfg.model.s0);
        if (const auto* b = find_side(row.american, Side::Buyer)) {
            price_b.emplace_back(row.strike, b->price);
            iv_b.emplace_back(lm, iv_buy[k]);
            amer_b.emplace_back(row.strike, b->price);
        }
        if (const auto* s = find_side(row.american, Side::Seller)) {
            price_s.emplace_back(row.strike, s->price);
            iv_s.emplace_back(lm, iv_sell[k]);
        }
        if (const auto* e = find_side(row.european, Side::Buyer)) euro_b.emplace_back(row.strike, e->price);
    }
    std::vector<Panel> panels(3);
    panels[0].title = "Indifference prices";
    panels[0].xlabel = "strike";
    panels[1].title = "Implied volatility";
    panels[1].xlabel = "log-moneyness ln(K/S)";
    panels[2].title = "Buyer: American vs European";
    panels[2].xlabel = "strike";
    if (!price_b.empty()) {
        write_dat(track(dir / "panel_price_buyer.dat"), price_b);
        write_dat(track(dir / "panel_iv_buyer.dat"), iv_b);
        write_dat(track(dir / "panel_american_buyer.dat"), amer_b);
        panels[0].series.emplace_back("buyer", price_b);
        panels[1].series.emplace_back("buyer", iv_b);
        panels[2].series.emplace_back("American", amer_b);
    }
    if (!price_s.empty()) {
        write_dat(track(dir / "panel_price_seller.dat"), price_s);
        write_dat(track(dir / "panel_iv_seller.dat"), iv_s);
        panels[0].series.emplace_back("seller", price_s);
        panels[1].series.emplace_back("seller", iv_s);
    }
    if (!euro_b.empty()) {
        write_dat(track(dir / "panel_european_buyer.dat"), euro_b);
        panels[2].series.emplace_back("European", euro_b);
    }
    if (cfg.output.svg) write_svg(track(dir / "smile.svg"), panels);

    std::string footer;
    if (cfg.output.compare && cfg.solver.kind != RegressorKind::Table) {
        ExperimentConfig other = cfg;
        other.solver.kind = cfg.solver.kind == RegressorKind::Net ? RegressorKind::Poly : RegressorKind::Net;
        const auto rows2 = smile(sides, model, cfg.payoffs(), driver, bundle, other.solver, false);
        auto out = open_out(track(dir / "comparison.csv"));
        const std::string a = regressor_kind_name(cfg.solver.kind);
        const std::string b = regressor_kind_name(other.solver.kind);
        out << "strike,side,price_" << a << ",price_" << b << ",abs_diff\n";
        double worst = 0.0;
        for (std::size_t k = 0; k < res.rows.size(); ++k) {
            for (const auto& r : res.rows[k].american) {
                const auto* o = find_side(rows2[k].american, r.side);
                const double d = std::fabs(r.price - o->price);
                worst = std::max(worst, d);
                out << num(r.strike) << ',' << side_name(r.side) << ',' << num(r.price) << ',' << num(o->price)
                    << ',' << num(d) << '\n';
            }
        }
        footer = "max_abs_price_diff_" + a + "_vs_" + b + "=" + num(worst) + "\n";
    }

    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    {
        auto out = open_out(track(dir / "summary.txt"));
        std::size_t failed = 0;
        for (const auto& p : res.properties) failed += p.passed ? 0 : 1;
        out << "config=" << cfg.name << "\nregressor=" << regressor_kind_name(cfg.solver.kind) << "\nN=" << cfg.steps
            << "\nn_paths=" << bundle.n_paths << "\nseed=" << cfg.seed << "\nstrikes=" << res.rows.size()
            << "\nproperty_checks=" << res.properties.size() << "\nproperty_failures=" << failed << '\n'
            << footer;
    }
    {
        auto out = open_out(track(dir / "config.json"));
        out << config_to_json(cfg) << '\n';
    }
    return res;
}

PricingResult run_price(const ExperimentConfig& cfg, double strike, Side side) {
    cfg.check();
    if (!(strike > 0.0)) throw ConfigError("field 'strike': must be positive");
    const MarketModel model = cfg.market();
    const PathBundle bundle = make_bundle(cfg, model);
    return price(side, model, cfg.make_payoff(strike), cfg.make_driver(), bundle, cfg.solver);
}

std::string format_price_line(const PricingResult& r) {
    std::ostringstream o;
    o << "side=" << side_name(r.side) << " strike=" << num(r.strike) << " price=" << num(r.price)
      << " std_error=" << num(r.mc_std_error) << " risk_with_claim=" << num(r.risk_with_claim)
      << " risk_without=" << num(r.risk_without) << " N=" << r.steps << " n_paths=" << r.n_paths
      << " seed=" << r.seed << " regressor=" << regressor_kind_name(r.regressor) << " max_clip=" << num(r.max_clip)
      << " skorokhod_violations=" << r.skorokhod_violations;
    return o.str();
}

namespace {

double max_abs_diff(const NodeValues& oracle, const Matrix& y, const PathBundle& b) {
    double worst = 0.0;
    for (Eigen::Index p = 0; p < y.rows(); ++p)
        for (Eigen::Index i = 0; i < y.cols(); ++i) {
            const double o = oracle[static_cast<std::size_t>(i)][b.node_id(p, i)];
            worst = std::max(worst, std::fabs(o - y(p, i)));
        }
    return worst;
}

} // namespace

ValidateOutcome run_validate(const ExperimentConfig& cfg) {
    cfg.check();
    const fs::path dir(cfg.output.dir);
    fs::create_directories(dir);
    ValidateOutcome res;
    const Driver driver = cfg.make_driver();
    const double bx = cfg.validate.box;
    const ValidationReport report = validate_driver(driver, SampleBox{-bx, bx, -bx, bx}, cfg.validate.n_samples);
    res.driver_violations = report.violations();
    {
        auto out = open_out(dir / "driver_validation.json");
        out << report.to_json() << '\n';
        res.files.push_back((dir / "driver_validation.json").string());
    }

    // The remaining checks need a conjugate-based pricing driver; they are
    // skipped for drivers that failed certification.
    json agreement = json::array();
    std::vector<PropertyCheck> props;
    const MarketModel model = cfg.market();
    if (report.passed()) {
        SolverConfig table = cfg.solver;
        table.kind = RegressorKind::Table;
        for (std::size_t n : cfg.validate.oracle_steps) {
            const TimeGrid grid(cfg.maturity, n);
            const Tree tree = build_tree(model, grid);
            const PathBundle bundle = tree_path_bundle(tree);
            double worst = 0.0;
            for (Side side : {Side::Seller, Side::Buyer}) {
                const EffectiveDriver eff(side, driver);
                const BackwardSolution boundary = solve_boundary_bsde(model, bundle, eff, table);
                for (const Payoff& pay : cfg.payoffs()) {
                    for (bool american : {true, false}) {
                        const OraclePrice o = oracle_price(side, model, grid, pay, driver, american);
                        const PricingResult r = american ? price(side, model, pay, driver, bundle, table, &boundary)
                                                         : price_european(side, model, pay, driver, bundle, table, &boundary);
                        worst = std::max(worst, std::fabs(o.result.price - r.price));
                    }
                }
                const OracleSolution ob = oracle_bsde(tree, model, eff,
                                                      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(bundle.n_paths)));
                worst = std::max(worst, max_abs_diff(ob.y, boundary.y, bundle));
            }
            res.oracle_max_abs_diff = std::max(res.oracle_max_abs_diff, worst);
            agreement.push_back({{"N", n}, {"max_abs_diff", worst}, {"passed", worst < 1e-10}});
        }

        const std::size_t n_props = *std::max_element(cfg.validate.oracle_steps.begin(), cfg.validate.oracle_steps.end());
        const TimeGrid grid(cfg.maturity, n_props);
        std::vector<SmileRow> rows;
        std::vector<double> strikes = cfg.payoff.strikes;
        std::sort(strikes.begin(), strikes.end());
        for (double k : strikes) {
            SmileRow row;
            row.strike = k;
            for (Side side : {Side::Buyer, Side::Seller}) {
                row.american.push_back(oracle_price(side, model, grid, cfg.make_payoff(k), driver, true).result);
                row.european.push_back(oracle_price(side, model, grid, cfg.make_payoff(k), driver, false).result);
            }
            rows.push_back(std::move(row));
        }
        props = smile_properties(rows, {Side::Buyer, Side::Seller}, cfg.model.s0, 0, 0, 0, 0, 1e-12);
    }
    {
        auto out = open_out(dir / "oracle_agreement.json");
        out << agreement.dump(2) << '\n';
        res.files.push_back((dir / "oracle_agreement.json").string());
    }
    {
        json arr = json::array();
        for (const auto& p : props) {
            arr.push_back({{"property", p.name}, {"strike", p.strike}, {"side", p.side}, {"value", p.value},
                           {"tolerance", p.tolerance}, {"passed", p.passed}});
            res.property_failures += p.passed ? 0 : 1;
        }
        auto out = open_out(dir / "properties.json");
        out << arr.dump(2) << '\n';
        res.files.push_back((dir / "properties.json").string());
    }
    res.passed = report.passed() && res.oracle_max_abs_diff < 1e-10 && res.property_failures == 0;
    return res;
}

std::string run_simulate(const ExperimentConfig& cfg) {
    cfg.check();
    const fs::path dir(cfg.output.dir);
    fs::create_directories(dir);
    const PathBundle b = simulate(cfg.market(), cfg.grid(), cfg.n_paths, cfg.seed);
    const fs::path p = dir / "paths.rdpb";
    write_bundle(p.string(), b);
    return p.string();
}

std::string run_oracle(const ExperimentConfig& cfg, double strike, Side side) {
    cfg.check();
    const fs::path dir(cfg.output.dir);
    fs::create_directories(dir);
    const MarketModel model = cfg.market();
    const OraclePrice o = oracle_price(side, model, cfg.grid(), cfg.make_payoff(strike), cfg.make_driver());
    const Tree tree = build_tree(model, cfg.grid());
    const fs::path p = dir / ("oracle_" + std::string(side_name(side)) + "_K" + num(strike) + ".csv");
    auto out = open_out(p);
    write_oracle_csv(out, tree, o.claim);
    auto bout = open_out(dir / ("oracle_" + std::string(side_name(side)) + "_boundary.csv"));
    write_oracle_csv(bout, tree, o.boundary);
    return p.string();
}

} // namespace riskdiff
