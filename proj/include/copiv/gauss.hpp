#pragma once

#include <cstdint>

namespace copiv {

inline constexpr double kProbEps = 1e-12;
inline constexpr double kCorrEps = 1e-8;

// Probability kept away from {0,1} before any quantile transform.
struct Prob {
    double value = 0.5;
    bool clamped = false;
    static Prob clamp(double p);
};

// Correlation kept inside |rho| <= 1 - kCorrEps.
struct Corr {
    double value = 0.0;
    bool clamped = false;
    static Corr clamp(double r);
};

// Process-wide clamp event counters (reported in run diagnostics).
struct ClampCounts {
    std::uint64_t prob = 0;
    std::uint64_t corr = 0;
};
ClampCounts clamp_counts();
void reset_clamp_counts();

double phi(double x);
double Phi(double x);
double log_Phi(double x);
// phi(x) / Phi(x), stable for very negative x.
double mills(double x);

// Quantile of N(0,1). p is clamped to [kProbEps, 1 - kProbEps].
double Phi_inv(double p);
double Phi_inv(Prob p);

// Standard bivariate normal density and CDF with correlation rho.
double phi2(double x, double y, double rho);
double Phi2(double x, double y, double rho);

}  // namespace copiv
