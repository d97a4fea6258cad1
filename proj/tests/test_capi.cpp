#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

#include <riskdiff/riskdiff.h>

namespace fs = std::filesystem;

TEST_CASE("status names and version") {
    CHECK(std::string(rd_status_name(RD_OK)) == "ok");
    CHECK(std::string(rd_status_name(RD_ERR_CONFIG)).size() > 0);
    CHECK(std::string(rd_version()).size() > 0);
}

TEST_CASE("null arguments are reported, not dereferenced") {
    CHECK(rd_config_preset(nullptr, nullptr) == RD_ERR_NULL_ARG);
    double out = 0.0;
    CHECK(rd_driver_g(nullptr, 0.0, 0.0, &out) == RD_ERR_NULL_ARG);
    rd_config_free(nullptr);
    rd_driver_free(nullptr);
}

TEST_CASE("config handles") {
    rd_config* cfg = nullptr;
    CHECK(rd_config_preset("missing", &cfg) == RD_ERR_CONFIG);
    CHECK(cfg == nullptr);
    CHECK(std::string(rd_last_error()).size() > 0);
    REQUIRE(rd_config_preset("paper-fig1-lite", &cfg) == RD_OK);
    CHECK(rd_config_set_regressor(cfg, "poly") == RD_OK);
    CHECK(rd_config_set_regressor(cfg, "forest") == RD_ERR_CONFIG);
    CHECK(rd_config_set_n_paths(cfg, 0) != RD_OK);
    CHECK(rd_config_set_seed(cfg, 42) == RD_OK);
    size_t needed = 0;
    CHECK(rd_config_to_json(cfg, nullptr, 0, &needed) == RD_OK);
    CHECK(needed > 10);
    std::string buf(needed, '\0');
    CHECK(rd_config_to_json(cfg, buf.data(), buf.size(), &needed) == RD_OK);
    CHECK(buf.find("\"seed\": 42") != std::string::npos);
    rd_config_free(cfg);

    rd_config* bad = nullptr;
    CHECK(rd_config_from_json("{\"unknown\": 1}", &bad) == RD_ERR_CONFIG);
    CHECK(rd_config_from_file("/nonexistent/file.json", &bad) != RD_OK);
}

TEST_CASE("pricing through the C interface") {
    rd_config* cfg = nullptr;
    REQUIRE(rd_config_from_json(R"({"preset": "paper-fig1-lite", "grid": {"N": 4},
                                    "solver": {"regressor": "poly", "n_paths": 2000}})",
                                &cfg) == RD_OK);
    const fs::path dir = fs::temp_directory_path() / "riskdiff_capi";
    fs::remove_all(dir);
    REQUIRE(rd_config_set_out_dir(cfg, dir.string().c_str()) == RD_OK);
    rd_price_result r{};
    REQUIRE(rd_run_price(cfg, 100.0, "seller", &r) == RD_OK);
    CHECK(std::isfinite(r.price));
    CHECK(r.price > 0.0);
    CHECK(r.mc_std_error > 0.0);
    CHECK(r.n_paths == 2000);
    CHECK(r.regressor == 0);
    CHECK(rd_run_price(cfg, 100.0, "both", &r) == RD_ERR_CONFIG);
    char line[512];
    CHECK(rd_format_price(&r, line, sizeof line) == RD_OK);
    CHECK(std::string(line).find("price") != std::string::npos);
    char small[4];
    CHECK(rd_format_price(&r, small, sizeof small) == RD_ERR_SHAPE);
    CHECK(rd_write_price_csv(&r, (dir / "missing" / "p.csv").string().c_str()) == RD_ERR_IO);
    fs::create_directories(dir);
    const std::string csv = (dir / "price.csv").string();
    CHECK(rd_write_price_csv(&r, csv.c_str()) == RD_OK);
    CHECK(fs::file_size(csv) > 0);
    rd_config_free(cfg);
}

TEST_CASE("drivers and quotes through the C interface") {
    rd_driver* d = nullptr;
    REQUIRE(rd_driver_entropic(1.0, 0.2, &d) == RD_OK);
    double g = 0.0, gs = 0.0, num = 0.0, f = 0.0;
    CHECK(rd_driver_g(d, 1.0, 1.0, &g) == RD_OK);
    CHECK(g == doctest::Approx(1.22));
    CHECK(rd_driver_g_star(d, 1.0, 1.0, &gs) == RD_OK);
    CHECK(rd_driver_numerical_conjugate(d, 1.0, 1.0, 50.0, &num) == RD_OK);
    CHECK(std::fabs(gs - num) < 1e-8);
    CHECK(rd_driver_numerical_conjugate(d, 30.0, 0.0, 10.0, &num) == RD_ERR_RADIUS);
    CHECK(rd_driver_effective(d, RD_SELLER, 0.0, 1.3, 2.0, &f) == RD_OK);
    CHECK(f == doctest::Approx(2.0).epsilon(1e-12));
    size_t violations = 99;
    CHECK(rd_driver_violations(d, 10.0, 2000, &violations) == RD_OK);
    CHECK(violations == 0);
    rd_driver_free(d);
    CHECK(rd_driver_entropic(-1.0, 0.2, &d) == RD_ERR_PARAMETER);

    double p = 0.0, iv = 0.0;
    CHECK(rd_bs_price(100.0, 100.0, 0.0, 0.2, 1.0, 1, &p) == RD_OK);
    CHECK(std::fabs(p - 7.96557) < 1e-4);
    CHECK(rd_implied_vol(100.0, 100.0, 0.0, 1.0, p, 1, &iv) == RD_OK);
    CHECK(std::fabs(iv - 0.2) < 1e-8);
    CHECK(rd_implied_vol(100.0, 100.0, 0.0, 1.0, 150.0, 1, &iv) == RD_ERR_INVERSION);
    CHECK(rd_bs_price(100.0, 100.0, 0.0, -0.2, 1.0, 1, &p) == RD_ERR_DOMAIN);
}
