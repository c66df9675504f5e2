#include "copiv/gauss.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>

#include "copiv/errors.hpp"

namespace copiv {

namespace {

std::atomic<std::uint64_t> g_prob_clamps{0};
std::atomic<std::uint64_t> g_corr_clamps{0};

constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Gauss-Legendre half-rules (nodes on (0,1), weights) with 6, 12 and 20 points.
constexpr double kW6[3] = {0.1713244923791705, 0.3607615730481384, 0.4679139345726904};
constexpr double kX6[3] = {0.9324695142031522, 0.6612093864662647, 0.2386191860831970};
constexpr double kW12[6] = {0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                            0.2031674267230659,  0.2334925365383547, 0.2491470458134029};
constexpr double kX12[6] = {0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
                            0.5873179542866171, 0.3678314989981802, 0.1252334085114692};
constexpr double kW20[10] = {0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
                             0.08327674157670475, 0.1019301198172404,  0.1181945319615184,
                             0.1316886384491766,  0.1420961093183821,  0.1491729864726037,
                             0.1527533871307259};
constexpr double kX20[10] = {0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
                             0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
                             0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
                             0.07652652113349733};

// P(X > dh, Y > dk) for a standard bivariate normal with correlation r.
double bvnu(double dh, double dk, double r) {
    const double* w;
    const double* x;
    int lg;
    if (std::abs(r) < 0.3) {
        w = kW6; x = kX6; lg = 3;
    } else if (std::abs(r) < 0.75) {
        w = kW12; x = kX12; lg = 6;
    } else {
        w = kW20; x = kX20; lg = 10;
    }

    double h = dh, k = dk, hk = h * k, bvn = 0.0;
    if (std::abs(r) < 0.925) {
        const double hs = (h * h + k * k) / 2.0;
        const double asr = std::asin(r) / 2.0;
        for (int i = 0; i < lg; ++i) {
            double sn = std::sin(asr * (1.0 - x[i]));
            bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
            sn = std::sin(asr * (1.0 + x[i]));
            bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
        }
        return bvn * asr / kTwoPi + Phi(-h) * Phi(-k);
    }

    if (r < 0) {
        k = -k;
        hk = -hk;
    }
    if (std::abs(r) < 1.0) {
        const double as = (1.0 - r) * (1.0 + r);
        double a = std::sqrt(as);
        const double bs = (h - k) * (h - k);
        const double c = (4.0 - hk) / 8.0;
        const double d = (12.0 - hk) / 80.0;
        double asr = -(bs / as + hk) / 2.0;
        if (asr > -100.0) {
            bvn = a * std::exp(asr) * (1.0 - c * (bs - as) * (1.0 - d * bs) / 3.0 + c * d * as * as);
        }
        if (hk > -100.0) {
            const double b = std::sqrt(bs);
            const double sp = std::sqrt(kTwoPi) * Phi(-b / a);
            bvn -= std::exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
        }
        a /= 2.0;
        double acc = 0.0;
        for (int i = 0; i < lg; ++i) {
            for (int s = -1; s <= 1; s += 2) {
                const double t = a * (1.0 + s * x[i]);
                const double xs = t * t;
                const double rs = std::sqrt(1.0 - xs);
                asr = -(bs / xs + hk) / 2.0;
                if (asr > -100.0) {
                    const double sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
                    const double ep = std::exp(-hk * xs / (2.0 * (1.0 + rs) * (1.0 + rs))) / rs;
                    acc += w[i] * std::exp(asr) * (sp - ep);
                }
            }
        }
        bvn = (a * acc - bvn) / kTwoPi;
    }
    if (r > 0) return bvn + Phi(-std::max(h, k));
    if (h >= k) return -bvn;
    const double L = h < 0 ? Phi(k) - Phi(h) : Phi(-h) - Phi(-k);
    return L - bvn;
}

// Wichura AS241 starting value.
double ppnd16(double p) {
    const double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r +
                    45921.953931549871457) * r + 13731.693765509461125) * r + 1971.5909503065514427) * r +
                 133.14166789178437745) * r + 3.387132872796366608) /
               (((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r +
                    21213.794301586595867) * r + 5394.1960214247511077) * r + 687.1870074920579083) * r +
                 42.313330701600911252) * r + 1.0);
    }
    double r = q < 0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double x;
    if (r <= 5.0) {
        r -= 1.6;
        x = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r +
                1.27045825245236838258) * r + 3.64784832476320460504) * r + 5.7694972214606914055) * r +
             4.6303378461565452959) * r + 1.42343711074968357734) /
            (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r +
                 0.14810397642748007459) * r + 0.68976733498510000455) * r + 1.6763848301838038494) * r +
              2.05319162663775882187) * r + 1.0);
    } else {
        r -= 5.0;
        x = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r +
                0.026532189526576123093) * r + 0.29656057182850489123) * r + 1.7848265399172913358) * r +
             5.4637849111641143699) * r + 6.6579046435011037772) /
            (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r +
                 7.868691311456132591e-4) * r + 0.0148753612908506148525) * r + 0.13692988092273580531) * r +
              0.59983220655588793769) * r + 1.0);
    }
    return q < 0 ? -x : x;
}

}  // namespace

Prob Prob::clamp(double p) {
    if (std::isnan(p) || p < 0.0 || p > 1.0) throw DomainError("probability outside [0,1]");
    Prob out{p, false};
    if (p < kProbEps) {
        out.value = kProbEps;
        out.clamped = true;
    } else if (p > 1.0 - kProbEps) {
        out.value = 1.0 - kProbEps;
        out.clamped = true;
    }
    if (out.clamped) g_prob_clamps.fetch_add(1, std::memory_order_relaxed);
    return out;
}

Corr Corr::clamp(double r) {
    if (std::isnan(r) || r < -1.0 || r > 1.0) throw DomainError("correlation outside [-1,1]");
    Corr out{r, false};
    if (std::abs(r) > 1.0 - kCorrEps) {
        out.value = std::copysign(1.0 - kCorrEps, r);
        out.clamped = true;
        g_corr_clamps.fetch_add(1, std::memory_order_relaxed);
    }
    return out;
}

ClampCounts clamp_counts() {
    return {g_prob_clamps.load(), g_corr_clamps.load()};
}

void reset_clamp_counts() {
    g_prob_clamps = 0;
    g_corr_clamps = 0;
}

double phi(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double Phi(double x) { return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0); }

double mills(double x) {
    if (x > -30.0) return phi(x) / Phi(x);
    // Asymptotic series of Phi(x) / phi(x) for x -> -inf.
    const double z = 1.0 / (x * x);
    const double s = 1.0 - z * (1.0 - 3.0 * z * (1.0 - 5.0 * z * (1.0 - 7.0 * z)));
    return -x / s;
}

double log_Phi(double x) {
    if (x > -30.0) return std::log(Phi(x));
    // log phi(x) written out: phi itself underflows below x = -38.
    return -0.5 * x * x - 0.5 * std::log(kTwoPi) - std::log(mills(x));
}

double Phi_inv(double p) { return Phi_inv(Prob::clamp(p)); }

double Phi_inv(Prob p) {
    double x = ppnd16(p.value);
    // One Halley refinement.
    const double e = (Phi(x) - p.value) / phi(x);
    x -= e / (1.0 + 0.5 * x * e);
    return x;
}

double phi2(double x, double y, double rho) {
    const double r = Corr::clamp(rho).value;
    const double om = (1.0 - r) * (1.0 + r);
    return std::exp(-(x * x - 2.0 * r * x * y + y * y) / (2.0 * om)) / (kTwoPi * std::sqrt(om));
}

double Phi2(double x, double y, double rho) {
    if (std::isnan(x) || std::isnan(y)) throw DomainError("Phi2 argument is NaN");
    const double r = Corr::clamp(rho).value;
    if (x == -std::numeric_limits<double>::infinity() || y == -std::numeric_limits<double>::infinity())
        return 0.0;
    if (x == std::numeric_limits<double>::infinity()) return Phi(y);
    if (y == std::numeric_limits<double>::infinity()) return Phi(x);
    const double px = Phi(x), py = Phi(y);
    const double v = bvnu(-x, -y, r);
    return std::clamp(v, std::max(px + py - 1.0, 0.0), std::min(px, py));
}

}  // namespace copiv
