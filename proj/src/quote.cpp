#include "quote.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "errors.hpp"

namespace riskdiff {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

namespace {

void check_inputs(double spot, double strike, double vol, double maturity) {
    if (!(spot > 0.0) || !(strike > 0.0)) throw DomainError("bs_price: spot and strike must be positive");
    if (!(vol >= 0.0)) throw DomainError("bs_price: negative volatility");
    if (!(maturity >= 0.0)) throw DomainError("bs_price: negative maturity");
}

} // namespace

double bs_price(double spot, double strike, double rate, double vol, double maturity, OptionSide side) {
    check_inputs(spot, strike, vol, maturity);
    const double df_strike = strike * std::exp(-rate * maturity);
    const double sd = vol * std::sqrt(maturity);
    if (sd == 0.0) {
        return side == OptionSide::Put ? std::max(df_strike - spot, 0.0) : std::max(spot - df_strike, 0.0);
    }
    const double d1 = (std::log(spot / df_strike)) / sd + 0.5 * sd;
    const double d2 = d1 - sd;
    if (side == OptionSide::Put) return df_strike * normal_cdf(-d2) - spot * normal_cdf(-d1);
    return spot * normal_cdf(d1) - df_strike * normal_cdf(d2);
}

double bs_vega(double spot, double strike, double rate, double vol, double maturity) {
    check_inputs(spot, strike, vol, maturity);
    const double sd = vol * std::sqrt(maturity);
    if (sd == 0.0) return 0.0;
    const double d1 = std::log(spot / (strike * std::exp(-rate * maturity))) / sd + 0.5 * sd;
    return spot * std::sqrt(maturity) * std::exp(-0.5 * d1 * d1) / std::sqrt(2.0 * std::numbers::pi);
}

double implied_vol(const Quote& q) {
    const auto f = [&](double vol) {
        return bs_price(q.spot, q.strike, q.rate, vol, q.maturity, q.side) - q.price;
    };
    if (!(q.maturity > 0.0)) throw InversionError("implied_vol: maturity must be positive");
    // No-arbitrage bounds of the discounted-strike put (call by parity). A
    // price within rounding of a bound carries no volatility information.
    const double disc_k = q.strike * std::exp(-q.rate * q.maturity);
    const double lower = q.side == OptionSide::Put ? std::max(disc_k - q.spot, 0.0) : std::max(q.spot - disc_k, 0.0);
    const double upper = q.side == OptionSide::Put ? disc_k : q.spot;
    const double slack = 1e-12 * std::max(1.0, upper);
    if (!(q.price > lower + slack) || !(q.price < upper - slack)) {
        throw InversionError("implied_vol: price " + std::to_string(q.price) + " not strictly inside the bounds [" +
                             std::to_string(lower) + ", " + std::to_string(upper) + "]");
    }
    double lo = kMinImpliedVol;
    double hi = kMaxImpliedVol;
    const double f_lo = f(lo);
    const double f_hi = f(hi);
    if (!(f_lo < 0.0) || !(f_hi > 0.0)) {
        throw InversionError("implied_vol: price " + std::to_string(q.price) +
                             " outside the range reproducible on the volatility bracket");
    }
    double mid = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if (std::fabs(fm) < 1e-10 || hi - lo < 1e-15) break;
        (fm < 0.0 ? lo : hi) = mid;
    }
    for (int k = 0; k < 2; ++k) {
        const double vega = bs_vega(q.spot, q.strike, q.rate, mid, q.maturity);
        if (!(vega > 0.0)) break;
        const double cand = mid - f(mid) / vega;
        if (cand >= lo && cand <= hi && std::fabs(f(cand)) <= std::fabs(f(mid))) mid = cand;
    }
    return mid;
}

} // namespace riskdiff
