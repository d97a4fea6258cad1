#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "riskdiff/riskdiff.h"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitValidate = 4;

int report(rd_status s) {
    std::fprintf(stderr, "riskdiff: %s: %s\n", rd_status_name(s), rd_last_error());
    return (s == RD_ERR_CONFIG || s == RD_ERR_PARAMETER) ? kExitConfig : kExitSolver;
}

struct Common {
    std::string config;
    std::string preset;
    std::optional<uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<std::string> regressor;
    std::optional<size_t> n_paths;
    std::string side = "both";
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "JSON experiment config");
    app->add_option("--preset", c.preset, "paper-fig1 | paper-fig1-lite");
    app->add_option("--seed", c.seed, "path simulation seed");
    app->add_option("--out-dir", c.out_dir, "output directory");
    app->add_option("--regressor", c.regressor, "poly | net | table");
    app->add_option("--n-paths", c.n_paths, "number of simulated paths");
    app->add_option("--side", c.side, "buyer | seller | both");
}

rd_status load(const Common& c, rd_config** cfg) {
    rd_status s;
    if (!c.config.empty()) {
        s = rd_config_from_file(c.config.c_str(), cfg);
    } else if (!c.preset.empty()) {
        s = rd_config_preset(c.preset.c_str(), cfg);
    } else {
        s = rd_config_preset("paper-fig1-lite", cfg);
    }
    if (s != RD_OK) return s;
    if (c.seed) rd_config_set_seed(*cfg, *c.seed);
    if (c.out_dir) rd_config_set_out_dir(*cfg, c.out_dir->c_str());
    if (c.n_paths && (s = rd_config_set_n_paths(*cfg, *c.n_paths)) != RD_OK) return s;
    if (c.regressor && (s = rd_config_set_regressor(*cfg, c.regressor->c_str())) != RD_OK) return s;
    return RD_OK;
}

struct ConfigHandle {
    rd_config* p = nullptr;
    ~ConfigHandle() { rd_config_free(p); }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Risk-indifference prices of American options under stochastic volatility"};
    app.require_subcommand(1);

    Common smile_opts, price_opts, validate_opts, simulate_opts, oracle_opts;
    double price_strike = 100.0;
    double oracle_strike = 100.0;
    std::string price_csv;

    auto* smile = app.add_subcommand("smile", "price a strike sweep for buyer and seller");
    add_common(smile, smile_opts);
    auto* price = app.add_subcommand("price", "price a single strike");
    add_common(price, price_opts);
    price->add_option("--strike", price_strike, "strike");
    price->add_option("--csv", price_csv, "also write the result as CSV");
    auto* validate = app.add_subcommand("validate", "driver certification, oracle agreement, property suite");
    add_common(validate, validate_opts);
    auto* simulate = app.add_subcommand("simulate", "write the simulated path cache");
    add_common(simulate, simulate_opts);
    auto* oracle = app.add_subcommand("oracle", "dump exact tree values for one strike");
    add_common(oracle, oracle_opts);
    oracle->add_option("--strike", oracle_strike, "strike");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    ConfigHandle cfg;
    rd_status s = RD_OK;

    if (*smile) {
        if ((s = load(smile_opts, &cfg.p)) != RD_OK) return report(s);
        rd_smile_summary sum{};
        if ((s = rd_run_smile(cfg.p, smile_opts.side.c_str(), &sum)) != RD_OK) return report(s);
        std::printf("strikes=%zu property_checks=%zu property_failures=%zu seconds=%.1f\n", sum.strikes,
                    sum.property_checks, sum.property_failures, sum.seconds);
        return 0;
    }
    if (*price) {
        if ((s = load(price_opts, &cfg.p)) != RD_OK) return report(s);
        if (price_opts.side == "both") {
            std::fprintf(stderr, "riskdiff: price needs --side buyer or --side seller\n");
            return kExitConfig;
        }
        rd_price_result r{};
        if ((s = rd_run_price(cfg.p, price_strike, price_opts.side.c_str(), &r)) != RD_OK) return report(s);
        char line[1024];
        if ((s = rd_format_price(&r, line, sizeof line)) != RD_OK) return report(s);
        std::printf("%s\n", line);
        if (!price_csv.empty() && (s = rd_write_price_csv(&r, price_csv.c_str())) != RD_OK) return report(s);
        return 0;
    }
    if (*validate) {
        if ((s = load(validate_opts, &cfg.p)) != RD_OK) return report(s);
        rd_validate_result r{};
        if ((s = rd_run_validate(cfg.p, &r)) != RD_OK) return report(s);
        std::printf("driver_violations=%zu oracle_max_abs_diff=%.3e property_failures=%zu passed=%s\n",
                    r.driver_violations, r.oracle_max_abs_diff, r.property_failures, r.passed ? "true" : "false");
        return r.passed ? 0 : kExitValidate;
    }
    if (*simulate) {
        if ((s = load(simulate_opts, &cfg.p)) != RD_OK) return report(s);
        char path[4096];
        if ((s = rd_run_simulate(cfg.p, path, sizeof path)) != RD_OK) return report(s);
        std::printf("%s\n", path);
        return 0;
    }
    if (*oracle) {
        if ((s = load(oracle_opts, &cfg.p)) != RD_OK) return report(s);
        const std::string side = oracle_opts.side == "both" ? "seller" : oracle_opts.side;
        char path[4096];
        if ((s = rd_run_oracle(cfg.p, oracle_strike, side.c_str(), path, sizeof path)) != RD_OK) return report(s);
        std::printf("%s\n", path);
        return 0;
    }
    return kExitConfig;
}
