#include "riskdiff/riskdiff.h"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <new>
#include <string>

#include "errors.hpp"
#include "experiment.hpp"
#include "quote.hpp"
#include "risk.hpp"

struct rd_config {
    riskdiff::ExperimentConfig cfg;
};

struct rd_driver {
    riskdiff::Driver d;
};

namespace {

thread_local std::string g_last_error;

rd_status fail(rd_status s, const char* what) {
    g_last_error = what ? what : "";
    return s;
}

template <typename Fn>
rd_status guarded(Fn&& fn) {
    using namespace riskdiff;
    g_last_error.clear();
    try {
        fn();
        return RD_OK;
    } catch (const ConfigError& e) {
        return fail(RD_ERR_CONFIG, e.what());
    } catch (const ParameterError& e) {
        return fail(RD_ERR_PARAMETER, e.what());
    } catch (const DomainError& e) {
        return fail(RD_ERR_DOMAIN, e.what());
    } catch (const ShapeError& e) {
        return fail(RD_ERR_SHAPE, e.what());
    } catch (const FitError& e) {
        return fail(RD_ERR_FIT, e.what());
    } catch (const StateError& e) {
        return fail(RD_ERR_STATE, e.what());
    } catch (const TrainingDiverged& e) {
        return fail(RD_ERR_TRAINING, e.what());
    } catch (const SolverError& e) {
        return fail(RD_ERR_SOLVER, e.what());
    } catch (const SizeError& e) {
        return fail(RD_ERR_SIZE, e.what());
    } catch (const RadiusTooSmall& e) {
        return fail(RD_ERR_RADIUS, e.what());
    } catch (const InversionError& e) {
        return fail(RD_ERR_INVERSION, e.what());
    } catch (const IoError& e) {
        return fail(RD_ERR_IO, e.what());
    } catch (const std::bad_alloc&) {
        return fail(RD_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(RD_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(RD_ERR_INTERNAL, "unknown error");
    }
}

rd_status copy_string(const std::string& s, char* buf, std::size_t size) {
    if (!buf || size == 0) return RD_OK;
    if (s.size() + 1 > size) return fail(RD_ERR_SHAPE, "output buffer too small");
    std::memcpy(buf, s.c_str(), s.size() + 1);
    return RD_OK;
}

riskdiff::PricingResult to_result(const rd_price_result& r) {
    riskdiff::PricingResult p;
    p.side = r.side == RD_BUYER ? riskdiff::Side::Buyer : riskdiff::Side::Seller;
    p.strike = r.strike;
    p.price = r.price;
    p.risk_with_claim = r.risk_with_claim;
    p.risk_without = r.risk_without;
    p.mc_std_error = r.mc_std_error;
    p.steps = r.steps;
    p.n_paths = r.n_paths;
    p.seed = r.seed;
    p.max_clip = r.max_clip;
    p.skorokhod_violations = r.skorokhod_violations;
    p.regressor = static_cast<riskdiff::RegressorKind>(r.regressor);
    return p;
}

#define RD_REQUIRE(ptr) \
    if (!(ptr)) return fail(RD_ERR_NULL_ARG, "null argument: " #ptr)

} // namespace

extern "C" {

const char* rd_version(void) { return "1.0.0"; }

const char* rd_status_name(rd_status s) {
    switch (s) {
    case RD_OK: return "ok";
    case RD_ERR_PARAMETER: return "parameter error";
    case RD_ERR_DOMAIN: return "domain error";
    case RD_ERR_SHAPE: return "shape error";
    case RD_ERR_FIT: return "fit error";
    case RD_ERR_STATE: return "state error";
    case RD_ERR_TRAINING: return "training diverged";
    case RD_ERR_SOLVER: return "solver error";
    case RD_ERR_SIZE: return "size error";
    case RD_ERR_RADIUS: return "search radius too small";
    case RD_ERR_INVERSION: return "inversion error";
    case RD_ERR_CONFIG: return "config error";
    case RD_ERR_IO: return "i/o error";
    case RD_ERR_NULL_ARG: return "null argument";
    case RD_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

const char* rd_last_error(void) { return g_last_error.c_str(); }

rd_status rd_config_preset(const char* name, rd_config** out) {
    RD_REQUIRE(name);
    RD_REQUIRE(out);
    return guarded([&] { *out = new rd_config{riskdiff::preset(name)}; });
}

rd_status rd_config_default(rd_config** out) {
    RD_REQUIRE(out);
    return guarded([&] { *out = new rd_config{riskdiff::ExperimentConfig{}}; });
}

rd_status rd_config_from_json(const char* text, rd_config** out) {
    RD_REQUIRE(text);
    RD_REQUIRE(out);
    return guarded([&] { *out = new rd_config{riskdiff::parse_config(text)}; });
}

rd_status rd_config_from_file(const char* path, rd_config** out) {
    RD_REQUIRE(path);
    RD_REQUIRE(out);
    return guarded([&] { *out = new rd_config{riskdiff::load_config(path)}; });
}

void rd_config_free(rd_config* cfg) { delete cfg; }

rd_status rd_config_set_seed(rd_config* cfg, uint64_t seed) {
    RD_REQUIRE(cfg);
    cfg->cfg.seed = seed;
    return RD_OK;
}

rd_status rd_config_set_out_dir(rd_config* cfg, const char* dir) {
    RD_REQUIRE(cfg);
    RD_REQUIRE(dir);
    cfg->cfg.output.dir = dir;
    return RD_OK;
}

rd_status rd_config_set_regressor(rd_config* cfg, const char* kind) {
    RD_REQUIRE(cfg);
    RD_REQUIRE(kind);
    return guarded([&] {
        try {
            cfg->cfg.solver.kind = riskdiff::parse_regressor_kind(kind);
        } catch (const riskdiff::ParameterError& e) {
            throw riskdiff::ConfigError(std::string("--regressor: ") + e.what());
        }
        cfg->cfg.check();
    });
}

rd_status rd_config_set_n_paths(rd_config* cfg, size_t n_paths) {
    RD_REQUIRE(cfg);
    return guarded([&] {
        cfg->cfg.n_paths = n_paths;
        cfg->cfg.check();
    });
}

rd_status rd_config_to_json(const rd_config* cfg, char* buf, size_t size, size_t* needed) {
    RD_REQUIRE(cfg);
    std::string s;
    const rd_status st = guarded([&] { s = riskdiff::config_to_json(cfg->cfg); });
    if (st != RD_OK) return st;
    if (needed) *needed = s.size() + 1;
    return copy_string(s, buf, size);
}

rd_status rd_run_smile(const rd_config* cfg, const char* side, rd_smile_summary* out) {
    RD_REQUIRE(cfg);
    RD_REQUIRE(side);
    return guarded([&] {
        std::vector<riskdiff::Side> sides;
        try {
            sides = riskdiff::parse_sides(side);
        } catch (const riskdiff::ParameterError& e) {
            throw riskdiff::ConfigError(std::string("--side: ") + e.what());
        }
        const auto res = riskdiff::run_smile(cfg->cfg, sides);
        if (out) {
            out->strikes = res.rows.size();
            out->property_checks = res.properties.size();
            out->property_failures = 0;
            for (const auto& p : res.properties) out->property_failures += p.passed ? 0 : 1;
            out->seconds = res.seconds;
        }
    });
}

rd_status rd_run_price(const rd_config* cfg, double strike, const char* side, rd_price_result* out) {
    RD_REQUIRE(cfg);
    RD_REQUIRE(side);
    RD_REQUIRE(out);
    return guarded([&] {
        riskdiff::Side s;
        try {
            s = riskdiff::parse_side(side);
        } catch (const riskdiff::ParameterError& e) {
            throw riskdiff::ConfigError(std::string("--side: ") + e.what());
        }
        const auto r = riskdiff::run_price(cfg->cfg, strike, s);
        out->side = r.side == riskdiff::Side::Buyer ? RD_BUYER : RD_SELLER;
        out->strike = r.strike;
        out->price = r.price;
        out->risk_with_claim = r.risk_with_claim;
        out->risk_without = r.risk_without;
        out->mc_std_error = r.mc_std_error;
        out->steps = r.steps;
        out->n_paths = r.n_paths;
        out->seed = r.seed;
        out->max_clip = r.max_clip;
        out->skorokhod_violations = r.skorokhod_violations;
        out->regressor = static_cast<int>(r.regressor);
    });
}

rd_status rd_format_price(const rd_price_result* r, char* buf, size_t size) {
    RD_REQUIRE(r);
    RD_REQUIRE(buf);
    std::string s;
    const rd_status st = guarded([&] { s = riskdiff::format_price_line(to_result(*r)); });
    if (st != RD_OK) return st;
    return copy_string(s, buf, size);
}

rd_status rd_write_price_csv(const rd_price_result* r, const char* path) {
    RD_REQUIRE(r);
    RD_REQUIRE(path);
    return guarded([&] {
        const auto p = to_result(*r);
        std::ofstream out(path);
        if (!out) throw riskdiff::IoError(std::string("cannot write '") + path + "'");
        char line[512];
        std::snprintf(line, sizeof line, "%.10g,%s,%.10g,%.10g,%.10g,%.10g,%zu,%zu,%llu,%s\n", p.strike,
                      riskdiff::side_name(p.side), p.price, p.risk_with_claim, p.risk_without, p.mc_std_error,
                      p.steps, p.n_paths, static_cast<unsigned long long>(p.seed),
                      riskdiff::regressor_kind_name(p.regressor));
        out << "strike,side,price,risk_with_claim,risk_without,mc_std_error,N,n_paths,seed,regressor_kind\n"
            << line;
    });
}

rd_status rd_run_validate(const rd_config* cfg, rd_validate_result* out) {
    RD_REQUIRE(cfg);
    RD_REQUIRE(out);
    return guarded([&] {
        const auto r = riskdiff::run_validate(cfg->cfg);
        out->passed = r.passed ? 1 : 0;
        out->driver_violations = r.driver_violations;
        out->oracle_max_abs_diff = r.oracle_max_abs_diff;
        out->property_failures = r.property_failures;
    });
}

rd_status rd_run_simulate(const rd_config* cfg, char* path_buf, size_t size) {
    RD_REQUIRE(cfg);
    std::string p;
    const rd_status st = guarded([&] { p = riskdiff::run_simulate(cfg->cfg); });
    if (st != RD_OK) return st;
    return copy_string(p, path_buf, size);
}

rd_status rd_run_oracle(const rd_config* cfg, double strike, const char* side, char* path_buf, size_t size) {
    RD_REQUIRE(cfg);
    RD_REQUIRE(side);
    std::string p;
    const rd_status st = guarded([&] {
        riskdiff::Side s;
        try {
            s = riskdiff::parse_side(side);
        } catch (const riskdiff::ParameterError& e) {
            throw riskdiff::ConfigError(std::string("--side: ") + e.what());
        }
        p = riskdiff::run_oracle(cfg->cfg, strike, s);
    });
    if (st != RD_OK) return st;
    return copy_string(p, path_buf, size);
}

rd_status rd_driver_entropic(double gamma, double eta, rd_driver** out) {
    RD_REQUIRE(out);
    return guarded([&] { *out = new rd_driver{riskdiff::entropic_driver(gamma, eta)}; });
}

rd_status rd_driver_quartic(rd_driver** out) {
    RD_REQUIRE(out);
    return guarded([&] { *out = new rd_driver{riskdiff::quartic_driver()}; });
}

void rd_driver_free(rd_driver* d) { delete d; }

rd_status rd_driver_g(const rd_driver* d, double z1, double z2, double* out) {
    RD_REQUIRE(d);
    RD_REQUIRE(out);
    return guarded([&] { *out = d->d.g(z1, z2); });
}

rd_status rd_driver_g_star(const rd_driver* d, double zeta, double z2, double* out) {
    RD_REQUIRE(d);
    RD_REQUIRE(out);
    return guarded([&] { *out = d->d.g_star(zeta, z2); });
}

rd_status rd_driver_numerical_conjugate(const rd_driver* d, double zeta, double z2, double radius, double* out) {
    RD_REQUIRE(d);
    RD_REQUIRE(out);
    return guarded([&] { *out = riskdiff::numerical_conjugate(d->d, zeta, z2, radius); });
}

rd_status rd_driver_effective(const rd_driver* d, rd_side side, double lambda, double z1, double z2, double* out) {
    RD_REQUIRE(d);
    RD_REQUIRE(out);
    return guarded([&] {
        const riskdiff::EffectiveDriver eff(side == RD_BUYER ? riskdiff::Side::Buyer : riskdiff::Side::Seller, d->d);
        *out = eff(lambda, z1, z2);
    });
}

rd_status rd_driver_violations(const rd_driver* d, double box, size_t n_samples, size_t* out) {
    RD_REQUIRE(d);
    RD_REQUIRE(out);
    return guarded([&] {
        *out = riskdiff::validate_driver(d->d, riskdiff::SampleBox{-box, box, -box, box}, n_samples).violations();
    });
}

rd_status rd_bs_price(double spot, double strike, double rate, double vol, double maturity, int put, double* out) {
    RD_REQUIRE(out);
    return guarded([&] {
        *out = riskdiff::bs_price(spot, strike, rate, vol, maturity,
                                  put ? riskdiff::OptionSide::Put : riskdiff::OptionSide::Call);
    });
}

rd_status rd_implied_vol(double spot, double strike, double rate, double maturity, double price, int put,
                         double* out) {
    RD_REQUIRE(out);
    return guarded([&] {
        riskdiff::Quote q{spot, strike, rate, maturity, price,
                          put ? riskdiff::OptionSide::Put : riskdiff::OptionSide::Call};
        *out = riskdiff::implied_vol(q);
    });
}

} // extern "C"
