#ifndef RISKDIFF_RISKDIFF_H
#define RISKDIFF_RISKDIFF_H

#include <stddef.h>
#include <stdint.h>

#if defined(RISKDIFF_BUILDING)
#define RD_API __attribute__((visibility("default")))
#else
#define RD_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rd_status {
    RD_OK = 0,
    RD_ERR_PARAMETER = 1,
    RD_ERR_DOMAIN = 2,
    RD_ERR_SHAPE = 3,
    RD_ERR_FIT = 4,
    RD_ERR_STATE = 5,
    RD_ERR_TRAINING = 6,
    RD_ERR_SOLVER = 7,
    RD_ERR_SIZE = 8,
    RD_ERR_RADIUS = 9,
    RD_ERR_INVERSION = 10,
    RD_ERR_CONFIG = 11,
    RD_ERR_IO = 12,
    RD_ERR_NULL_ARG = 13,
    RD_ERR_INTERNAL = 14
} rd_status;

typedef enum rd_side { RD_SELLER = 0, RD_BUYER = 1 } rd_side;

typedef struct rd_config rd_config;
typedef struct rd_driver rd_driver;

typedef struct rd_price_result {
    int side;
    double strike;
    double price;
    double risk_with_claim;
    double risk_without;
    double mc_std_error;
    size_t steps;
    size_t n_paths;
    uint64_t seed;
    double max_clip;
    size_t skorokhod_violations;
    int regressor; /* 0 poly, 1 net, 2 table */
} rd_price_result;

typedef struct rd_validate_result {
    int passed;
    size_t driver_violations;
    double oracle_max_abs_diff;
    size_t property_failures;
} rd_validate_result;

typedef struct rd_smile_summary {
    size_t strikes;
    size_t property_checks;
    size_t property_failures;
    double seconds;
} rd_smile_summary;

RD_API const char* rd_version(void);
RD_API const char* rd_status_name(rd_status status);
/* Message of the last failure on the calling thread (empty if none). */
RD_API const char* rd_last_error(void);

/* Configuration */
RD_API rd_status rd_config_preset(const char* name, rd_config** out);
RD_API rd_status rd_config_default(rd_config** out);
RD_API rd_status rd_config_from_json(const char* text, rd_config** out);
RD_API rd_status rd_config_from_file(const char* path, rd_config** out);
RD_API void rd_config_free(rd_config* cfg);
RD_API rd_status rd_config_set_seed(rd_config* cfg, uint64_t seed);
RD_API rd_status rd_config_set_out_dir(rd_config* cfg, const char* dir);
RD_API rd_status rd_config_set_regressor(rd_config* cfg, const char* kind);
RD_API rd_status rd_config_set_n_paths(rd_config* cfg, size_t n_paths);
/* Writes the effective configuration as JSON into buf (NUL-terminated);
   *needed receives the required size including the terminator. */
RD_API rd_status rd_config_to_json(const rd_config* cfg, char* buf, size_t size, size_t* needed);

/* Experiments. side is "buyer", "seller" or "both" (smile only).
   Functions filling a caller buffer return RD_ERR_SHAPE when it is too
   small. rd_write_price_csv does not create missing directories. */
RD_API rd_status rd_run_smile(const rd_config* cfg, const char* side, rd_smile_summary* out);
RD_API rd_status rd_run_price(const rd_config* cfg, double strike, const char* side, rd_price_result* out);
RD_API rd_status rd_format_price(const rd_price_result* r, char* buf, size_t size);
RD_API rd_status rd_write_price_csv(const rd_price_result* r, const char* path);
RD_API rd_status rd_run_validate(const rd_config* cfg, rd_validate_result* out);
RD_API rd_status rd_run_simulate(const rd_config* cfg, char* path_buf, size_t size);
RD_API rd_status rd_run_oracle(const rd_config* cfg, double strike, const char* side, char* path_buf, size_t size);

/* Drivers */
RD_API rd_status rd_driver_entropic(double gamma, double eta, rd_driver** out);
RD_API rd_status rd_driver_quartic(rd_driver** out);
RD_API void rd_driver_free(rd_driver* d);
RD_API rd_status rd_driver_g(const rd_driver* d, double z1, double z2, double* out);
RD_API rd_status rd_driver_g_star(const rd_driver* d, double zeta, double z2, double* out);
RD_API rd_status rd_driver_numerical_conjugate(const rd_driver* d, double zeta, double z2, double radius,
                                               double* out);
RD_API rd_status rd_driver_effective(const rd_driver* d, rd_side side, double lambda, double z1, double z2,
                                     double* out);
RD_API rd_status rd_driver_violations(const rd_driver* d, double box, size_t n_samples, size_t* out);

/* Quotes. put != 0 selects a put. */
RD_API rd_status rd_bs_price(double spot, double strike, double rate, double vol, double maturity, int put,
                             double* out);
RD_API rd_status rd_implied_vol(double spot, double strike, double rate, double maturity, double price, int put,
                                double* out);

#ifdef __cplusplus
}
#endif

#endif
