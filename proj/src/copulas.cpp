#include "copiv/copulas.hpp"

#include <algorithm>
#include <cmath>

#include "copiv/errors.hpp"
#include "copiv/gauss.hpp"

namespace copiv {

namespace {

constexpr double kSeriesCut = 1e-6;
constexpr double kTauMax = 1.0 - 1e-8;

void check_unit(double u, const char* name) {
    if (std::isnan(u) || u < 0.0 || u > 1.0) throw DomainError(std::string(name) + " outside [0,1]");
}

// ---------------------------------------------------------------- Gaussian

double gauss_C(double u1, double u2, double r) { return Phi2(Phi_inv(u1), Phi_inv(u2), r); }

double gauss_C1(double u1, double u2, double r) {
    const double rr = Corr::clamp(r).value;
    const double x1 = Phi_inv(u1), x2 = Phi_inv(u2);
    return Phi((x2 - rr * x1) / std::sqrt((1.0 - rr) * (1.0 + rr)));
}

double gauss_Crho(double u1, double u2, double r) { return phi2(Phi_inv(u1), Phi_inv(u2), r); }

// ---------------------------------------------------------------- Clayton

// log S with S = u1^-t + u2^-t - 1; returns false when S <= 0.
bool clayton_logS(double u1, double u2, double t, double& lS) {
    const double x1 = -t * std::log(u1), x2 = -t * std::log(u2);
    if (t >= 1.0) {
        const double m = std::max(x1, x2);
        lS = m + std::log(std::exp(x1 - m) + std::exp(x2 - m) - std::exp(-m));
        return true;
    }
    const double s = std::expm1(x1) + std::expm1(x2);
    if (s <= -1.0) return false;
    lS = std::log1p(s);
    return true;
}

double clayton_C(double u1, double u2, double t) {
    if (std::abs(t) < kSeriesCut) {
        const double a = std::log(u1), b = std::log(u2);
        return u1 * u2 * std::exp(t * a * b + t * t * a * b * (a + b) / 2.0);
    }
    double lS;
    if (!clayton_logS(u1, u2, t, lS)) return 0.0;
    return std::exp(-lS / t);
}

double clayton_C1(double u1, double u2, double t) {
    if (std::abs(t) < kSeriesCut) {
        const double a = std::log(u1), b = std::log(u2);
        const double c = clayton_C(u1, u2, t);
        return c / u1 * (1.0 + t * b + t * t * (2.0 * a * b + b * b) / 2.0);
    }
    double lS;
    if (!clayton_logS(u1, u2, t, lS)) return 0.0;
    return std::exp(-(t + 1.0) * std::log(u1) - (1.0 + 1.0 / t) * lS);
}

double clayton_Crho(double u1, double u2, double t) {
    const double a = std::log(u1), b = std::log(u2);
    if (std::abs(t) < kSeriesCut) return clayton_C(u1, u2, t) * (a * b + t * a * b * (a + b));
    double lS;
    if (!clayton_logS(u1, u2, t, lS)) return 0.0;
    const double c = std::exp(-lS / t);
    const double dlS = -(a * std::exp(-t * a - lS) + b * std::exp(-t * b - lS));
    return c * (lS / (t * t) - dlS / t);
}

// ---------------------------------------------------------------- Frank

// Frank with t > 0. For t < 0 use C(u, v; t) = u - C(u, 1 - v; -t).
double frank_pos_C(double u, double v, double t) {
    if (t < 1.0) {
        const double A = std::expm1(-t * u), B = std::expm1(-t * v), E = std::expm1(-t);
        return -std::log1p(A * B / E) / t;
    }
    const double m = std::min(u, v), M = std::max(u, v);
    const double delta = std::exp(-t * (M - m)) - std::exp(-t * (1.0 - m)) - std::exp(-t * M);
    return m - (std::log1p(delta) - std::log1p(-std::exp(-t))) / t;
}

// -(E + AB) * exp(t m), with m = min(u, v).
double frank_scaled_den(double u, double v, double t) {
    const double m = std::min(u, v), M = std::max(u, v);
    if (t < 1.0) {
        const double D = std::expm1(-t) + std::expm1(-t * u) * std::expm1(-t * v);
        return -D * std::exp(t * m);
    }
    return 1.0 + std::exp(-t * (M - m)) - std::exp(-t * (1.0 - m)) - std::exp(-t * M);
}

double frank_pos_C1(double u, double v, double t) {
    const double m = std::min(u, v);
    return std::exp(-t * (u - m)) * (-std::expm1(-t * v)) / frank_scaled_den(u, v, t);
}

double frank_pos_Crho(double u, double v, double t) {
    const double m = std::min(u, v);
    const double L = std::log(frank_scaled_den(u, v, t)) - t * m - std::log(-std::expm1(-t));
    // d/dt log(-D), with D = E + AB.
    const double num = -std::exp(-t * (1.0 - m)) - u * std::exp(-t * (u - m)) * std::expm1(-t * v) -
                       v * std::exp(-t * (v - m)) * std::expm1(-t * u);
    const double dlogD = num / (-frank_scaled_den(u, v, t));
    const double dlogE = std::exp(-t) / (-std::expm1(-t));
    return L / (t * t) - (dlogD - dlogE) / t;
}

double frank_series_C(double u, double v, double t) {
    const double g = (1.0 - u) * (1.0 - v);
    return u * v * (1.0 + t * g / 2.0 + t * t * g * (1.0 - 2.0 * u) * (1.0 - 2.0 * v) / 12.0);
}

double frank_C(double u, double v, double t) {
    if (std::abs(t) < kSeriesCut) return frank_series_C(u, v, t);
    if (t > 0) return frank_pos_C(u, v, t);
    return u - frank_pos_C(u, 1.0 - v, -t);
}

double frank_C1(double u, double v, double t) {
    if (std::abs(t) < kSeriesCut) {
        const double g = v * (1.0 - v);
        return v + t * g * (1.0 - 2.0 * u) / 2.0 +
               t * t * g * (1.0 - 2.0 * v) * (1.0 - 6.0 * u + 6.0 * u * u) / 12.0;
    }
    if (t > 0) return frank_pos_C1(u, v, t);
    return 1.0 - frank_pos_C1(u, 1.0 - v, -t);
}

double frank_Crho(double u, double v, double t) {
    if (std::abs(t) < kSeriesCut) {
        const double g = u * v * (1.0 - u) * (1.0 - v);
        return g / 2.0 + t * g * (1.0 - 2.0 * u) * (1.0 - 2.0 * v) / 6.0;
    }
    if (t > 0) return frank_pos_Crho(u, v, t);
    return frank_pos_Crho(u, 1.0 - v, -t);
}

// ---------------------------------------------------------------- local Spearman

double spearman_scale(double u1, double u2) { return std::sqrt(u1 * u2 * (1.0 - u1) * (1.0 - u2)); }

double spearman_C(double u1, double u2, double r) {
    const double c = u1 * u2 + r * spearman_scale(u1, u2);
    if (c < std::max(u1 + u2 - 1.0, 0.0) - kFrechetSlack || c > std::min(u1, u2) + kFrechetSlack)
        throw DomainError("local Spearman parameter leaves the Frechet bounds");
    return c;
}

double spearman_C1(double u1, double u2, double r) {
    return u2 + r * std::sqrt(u2 * (1.0 - u2)) * (1.0 - 2.0 * u1) / (2.0 * std::sqrt(u1 * (1.0 - u1)));
}

double tau_to_param(Family f, double tau) {
    if (f == Family::Gaussian) return tau;
    return tau / (1.0 - std::abs(tau));
}

void check_param(Family f, double rho) {
    if (std::isnan(rho)) throw DomainError("copula parameter is NaN");
    if (f == Family::Gaussian && std::abs(rho) > 1.0) throw DomainError("Gaussian rho outside [-1,1]");
    if (f == Family::Clayton && rho < -1.0) throw DomainError("Clayton parameter below -1");
}

}  // namespace

std::string to_string(Family f) {
    switch (f) {
        case Family::Gaussian: return "gaussian";
        case Family::Clayton: return "clayton";
        case Family::Frank: return "frank";
        case Family::LocalSpearman: return "local_spearman";
    }
    return "unknown";
}

Family family_from_string(std::string_view name) {
    if (name == "gaussian") return Family::Gaussian;
    if (name == "clayton") return Family::Clayton;
    if (name == "frank") return Family::Frank;
    if (name == "local_spearman") return Family::LocalSpearman;
    throw ConfigError("unknown copula family '" + std::string(name) + "'");
}

ParamRange param_range(Family f) {
    switch (f) {
        case Family::Gaussian: return {-kTauMax, kTauMax};
        case Family::Clayton: return {-1.0, tau_to_param(f, kTauMax)};
        case Family::Frank: return {tau_to_param(f, -kTauMax), tau_to_param(f, kTauMax)};
        case Family::LocalSpearman: return {-1.0, 1.0};
    }
    return {0.0, 0.0};
}

double C(Family f, double u1, double u2, double rho) {
    check_unit(u1, "u1");
    check_unit(u2, "u2");
    check_param(f, rho);
    if (u1 == 0.0 || u2 == 0.0) return 0.0;
    if (u1 == 1.0) return u2;
    if (u2 == 1.0) return u1;
    switch (f) {
        case Family::Gaussian: return gauss_C(u1, u2, rho);
        case Family::Clayton: return clayton_C(u1, u2, rho);
        case Family::Frank: return frank_C(u1, u2, rho);
        case Family::LocalSpearman: return spearman_C(u1, u2, rho);
    }
    return 0.0;
}

double C1(Family f, double u1, double u2, double rho) {
    check_unit(u1, "u1");
    check_unit(u2, "u2");
    check_param(f, rho);
    if (u2 == 0.0) return 0.0;
    if (u2 == 1.0) return 1.0;
    switch (f) {
        case Family::Gaussian: return gauss_C1(u1, u2, rho);
        case Family::Clayton: return clayton_C1(std::max(u1, kProbEps), u2, rho);
        case Family::Frank: return frank_C1(u1, u2, rho);
        case Family::LocalSpearman:
            return spearman_C1(std::clamp(u1, kProbEps, 1.0 - kProbEps), u2, rho);
    }
    return 0.0;
}

double C2(Family f, double u1, double u2, double rho) {
    // All four families are exchangeable.
    return C1(f, u2, u1, rho);
}

double Crho(Family f, double u1, double u2, double rho) {
    check_unit(u1, "u1");
    check_unit(u2, "u2");
    check_param(f, rho);
    if (u1 == 0.0 || u2 == 0.0 || u1 == 1.0 || u2 == 1.0) return 0.0;
    switch (f) {
        case Family::Gaussian: return gauss_Crho(u1, u2, rho);
        case Family::Clayton: return clayton_Crho(u1, u2, rho);
        case Family::Frank: return frank_Crho(u1, u2, rho);
        case Family::LocalSpearman: return spearman_scale(u1, u2);
    }
    return 0.0;
}

RhoSolution solve_rho(Family f, double t, double u1, double u2) {
    check_unit(u1, "u1");
    check_unit(u2, "u2");
    if (std::isnan(t)) throw DomainError("target probability is NaN");
    const double lower = std::max(u1 + u2 - 1.0, 0.0);
    const double upper = std::min(u1, u2);
    if (t < lower - kFrechetSlack)
        throw InfeasibleError("target below the lower Frechet bound max(u1+u2-1,0)");
    if (t > upper + kFrechetSlack) throw InfeasibleError("target above the upper Frechet bound min(u1,u2)");
    if (u1 == 0.0 || u2 == 0.0 || u1 == 1.0 || u2 == 1.0)
        throw DomainError("dependence parameter not identified on the boundary of the unit square");

    const ParamRange range = param_range(f);
    if (f == Family::LocalSpearman) {
        RhoSolution out;
        out.rho = (t - u1 * u2) / spearman_scale(u1, u2);
        out.boundary = t <= lower + kFrechetSlack || t >= upper - kFrechetSlack;
        return out;
    }

    double lo = f == Family::Clayton ? -0.5 : -kTauMax;
    double hi = kTauMax;
    const double c_lo = C(f, u1, u2, tau_to_param(f, lo));
    const double c_hi = C(f, u1, u2, tau_to_param(f, hi));
    RhoSolution out;
    if (t <= c_lo) {
        out.rho = range.lo;
        out.boundary = true;
        return out;
    }
    if (t >= c_hi) {
        out.rho = range.hi;
        out.boundary = true;
        return out;
    }
    int it = 0;
    for (; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double c = C(f, u1, u2, tau_to_param(f, mid));
        if (c == t) {
            lo = hi = mid;
            break;
        }
        if (c < t)
            lo = mid;
        else
            hi = mid;
    }
    out.rho = tau_to_param(f, 0.5 * (lo + hi));
    out.iterations = it;
    return out;
}

}  // namespace copiv
