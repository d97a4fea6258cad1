#pragma once

namespace riskdiff {

enum class OptionSide { Put, Call };

struct Quote {
    double spot = 100.0;
    double strike = 100.0;
    double rate = 0.0;
    double maturity = 1.0;
    double price = 0.0;
    OptionSide side = OptionSide::Put;
};

inline constexpr double kMinImpliedVol = 1e-6;
inline constexpr double kMaxImpliedVol = 5.0;

double normal_cdf(double x);

// Black-Scholes value. Throws DomainError on negative vol or maturity, or
// non-positive spot or strike.
double bs_price(double spot, double strike, double rate, double vol, double maturity, OptionSide side);

double bs_vega(double spot, double strike, double rate, double vol, double maturity);

// Bisection on [kMinImpliedVol, kMaxImpliedVol] followed by two safeguarded
// Newton steps. Throws InversionError when the price is not strictly inside
// the range the bracket can reproduce.
double implied_vol(const Quote& q);

} // namespace riskdiff
