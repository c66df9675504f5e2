#include "copiv/dgp.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>
#include <numeric>

#include "copiv/copulas.hpp"
#include "copiv/errors.hpp"
#include "copiv/gauss.hpp"
#include "copiv/parallel.hpp"
#include "copiv/rng.hpp"

namespace copiv {

namespace {

constexpr std::size_t kInvGrid = 4096;
constexpr double kWMax = 8.3;

template <class F>
double integrate(F f, double a, double b, double tol = 1e-14, unsigned depth = 20) {
    double err = 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, depth, tol, &err);
}

// Phi^-1(G(u)), exact for Gaussian marginals.
double normal_score(const Marginal& m, double u) {
    if (m.kind == Marginal::Kind::Gaussian) return (u - m.mean) / m.sd;
    return Phi_inv(m.cdf(u));
}

double normal_score_left(const Marginal& m, double u) {
    if (m.kind == Marginal::Kind::Gaussian) return (u - m.mean) / m.sd;
    return Phi_inv(m.cdf_left(u));
}

// Conditional law F_{U|V}(u | w) = Phi(a(u) + b(u) w) tabulated for inversion.
struct Sampler {
    std::vector<double> u, a, b;
    bool monotone = true;
    bool continuous = true;

    explicit Sampler(const OutcomeLaw& law) {
        const Marginal& m = law.marginal;
        auto push = [&](double uu, double score, double rho_at) {
            const double r = Corr::clamp(law.rho(rho_at)).value;
            const double s = std::sqrt((1.0 - r) * (1.0 + r));
            u.push_back(uu);
            a.push_back(score / s);
            b.push_back(-r / s);
        };
        if (m.kind == Marginal::Kind::Gaussian) {
            const double lo = m.lo(), hi = m.hi();
            for (std::size_t j = 0; j < kInvGrid; ++j) {
                const double uu = lo + (hi - lo) * static_cast<double>(j) / (kInvGrid - 1.0);
                push(uu, normal_score(m, uu), uu);
            }
        } else {
            continuous = false;
            // On [atom_k, atom_k+1) the joint CDF, hence rho, is that of atom_k.
            for (std::size_t k = 0; k < m.atoms.size(); ++k) {
                const double at = m.atoms[k];
                push(at, normal_score_left(m, at), k > 0 ? m.atoms[k - 1] : at);
                push(at, normal_score(m, at), at);
            }
        }
        for (std::size_t j = 0; j + 1 < u.size(); ++j) {
            const double da = a[j + 1] - a[j], db = b[j + 1] - b[j];
            if (da - std::abs(db) * kWMax < 0.0) monotone = false;
        }
    }

    double s(std::size_t j, double w) const { return a[j] + b[j] * w; }

    double interp(std::size_t j, double e, double sj1, double sj) const {
        if (sj <= sj1) return u[j];
        return u[j - 1] + (e - sj1) / (sj - sj1) * (u[j] - u[j - 1]);
    }

    // Smallest u with F_{U|V}(u | w) >= Phi(e) after a running-max rearrangement.
    double invert(double e, double w) const {
        const std::size_t J = u.size();
        if (monotone) {
            if (e <= s(0, w)) return continuous ? interp_extrap(0, 1, e, w) : u.front();
            if (e > s(J - 1, w)) return continuous ? interp_extrap(J - 2, J - 1, e, w) : u.back();
            std::size_t lo = 0, hi = J - 1;  // s(lo) < e <= s(hi)
            while (hi - lo > 1) {
                const std::size_t mid = (lo + hi) / 2;
                if (s(mid, w) >= e)
                    hi = mid;
                else
                    lo = mid;
            }
            return interp(hi, e, s(lo, w), s(hi, w));
        }
        double run = s(0, w);
        if (e <= run) return continuous ? interp_extrap(0, 1, e, w) : u.front();
        for (std::size_t j = 1; j < J; ++j) {
            const double sj = std::max(run, s(j, w));
            if (sj >= e) return interp(j, e, run, sj);
            run = sj;
        }
        return continuous ? interp_extrap(J - 2, J - 1, e, w) : u.back();
    }

    double interp_extrap(std::size_t j0, std::size_t j1, double e, double w) const {
        const double s0 = s(j0, w), s1 = s(j1, w);
        if (s1 <= s0) return e <= s0 ? u[j0] : u[j1];
        return u[j0] + (e - s0) / (s1 - s0) * (u[j1] - u[j0]);
    }
};

double dot(const std::vector<double>& a, const std::vector<double>& x) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size() && j < x.size(); ++j) s += a[j] * x[j];
    return s;
}

double norm2(const std::vector<double>& a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return std::sqrt(s);
}

// Level of a discrete treatment value; binary D = 1 is the lower cell V <= pi.
int level_of(const SelectionLaw& sel, double d) {
    if (sel.kind == TreatmentKind::Binary) return d > 0.5 ? 1 : 2;
    return static_cast<int>(std::lround(d));
}

}  // namespace

// ---------------------------------------------------------------- Marginal

double Marginal::cdf(double u) const {
    if (kind == Kind::Gaussian) return Phi((u - mean) / sd);
    double s = 0.0;
    for (std::size_t k = 0; k < atoms.size() && atoms[k] <= u; ++k) s += probs[k];
    return std::min(s, 1.0);
}

double Marginal::cdf_left(double u) const {
    if (kind == Kind::Gaussian) return cdf(u);
    double s = 0.0;
    for (std::size_t k = 0; k < atoms.size() && atoms[k] < u; ++k) s += probs[k];
    return std::min(s, 1.0);
}

double Marginal::quantile(double p) const {
    if (kind == Kind::Gaussian) return mean + sd * Phi_inv(p);
    double s = 0.0;
    for (std::size_t k = 0; k < atoms.size(); ++k) {
        s += probs[k];
        if (s >= p - 1e-15) return atoms[k];
    }
    return atoms.back();
}

std::vector<double> Marginal::atom_points() const { return kind == Kind::Step ? atoms : std::vector<double>{}; }

double Marginal::lo() const { return kind == Kind::Gaussian ? mean - 8.5 * sd : atoms.front(); }
double Marginal::hi() const { return kind == Kind::Gaussian ? mean + 8.5 * sd : atoms.back(); }

Marginal Marginal::gaussian(double mean, double sd) {
    if (!(sd > 0)) throw DomainError("Gaussian marginal needs sd > 0");
    Marginal m;
    m.mean = mean;
    m.sd = sd;
    return m;
}

Marginal Marginal::three_atom() {
    // Mean b + a/6 = 0, variance a^2 (13/12 - 1/36) = 1.
    const double a = 1.0 / std::sqrt(13.0 / 12.0 - 1.0 / 36.0);
    const double b = -a / 6.0;
    return step({-a + b, b, 1.5 * a + b}, {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
}

Marginal Marginal::step(std::vector<double> atoms, std::vector<double> probs) {
    if (atoms.empty() || atoms.size() != probs.size()) throw DomainError("step marginal needs matching atoms/probs");
    if (!std::is_sorted(atoms.begin(), atoms.end()) ||
        std::adjacent_find(atoms.begin(), atoms.end()) != atoms.end())
        throw DomainError("step marginal atoms must be strictly increasing");
    const double tot = std::accumulate(probs.begin(), probs.end(), 0.0);
    if (std::abs(tot - 1.0) > 1e-9 || std::any_of(probs.begin(), probs.end(), [](double p) { return p <= 0; }))
        throw DomainError("step marginal probabilities must be positive and sum to 1");
    Marginal m;
    m.kind = Kind::Step;
    m.atoms = std::move(atoms);
    m.probs = std::move(probs);
    return m;
}

// ---------------------------------------------------------------- RhoCurve

double RhoCurve::operator()(double u) const {
    switch (kind) {
        case Kind::Constant: return value;
        case Kind::Bump: return phi((u - center) / width) - base;
        case Kind::Tanh: return std::tanh(alpha + beta * u);
    }
    return 0.0;
}

RhoCurve RhoCurve::constant(double r) {
    if (!(std::abs(r) < 1.0)) throw DomainError("constant rho must lie in (-1,1)");
    RhoCurve c;
    c.value = r;
    return c;
}

RhoCurve RhoCurve::bump() {
    RhoCurve c;
    c.kind = Kind::Bump;
    c.center = 1.0;
    c.width = 3.0 / 5.0;
    c.base = phi(5.0 / 3.0);
    return c;
}

// ---------------------------------------------------------------- SelectionLaw

int SelectionLaw::levels() const {
    if (kind == TreatmentKind::Binary) return 2;
    if (kind == TreatmentKind::Ordered) return static_cast<int>(pi.size()) + 1;
    return 0;
}

int SelectionLaw::cells() const {
    if (kind == TreatmentKind::Continuous) return static_cast<int>(mu.size());
    return pi.empty() ? 0 : static_cast<int>(pi.front().size());
}

double SelectionLaw::threshold(int level, int z, double xb) const {
    if (kind == TreatmentKind::Continuous) throw DomainError("thresholds apply to discrete treatments");
    if (level <= 0) return 0.0;
    if (level >= levels()) return 1.0;
    const double p = pi[static_cast<std::size_t>(level - 1)][static_cast<std::size_t>(z)];
    return xb == 0.0 ? p : Phi(Phi_inv(p) + xb);
}

double SelectionLaw::cdf(double d, int z, double xb) const {
    if (kind != TreatmentKind::Continuous) throw DomainError("cdf applies to continuous treatments");
    return Phi((d - mu[static_cast<std::size_t>(z)] - xb) / sd);
}

double SelectionLaw::draw(double v, int z, double xb) const {
    if (kind == TreatmentKind::Continuous) return mu[static_cast<std::size_t>(z)] + xb + sd * Phi_inv(v);
    const int K = levels();
    int lev = K;
    for (int l = 1; l < K; ++l)
        if (v <= threshold(l, z, xb)) {
            lev = l;
            break;
        }
    if (kind == TreatmentKind::Binary) return lev == 1 ? 1.0 : 0.0;
    return lev;
}

void DgpSpec::validate() const {
    const auto& sel = selection;
    const int cells = 1 << instruments;
    if (instruments < 1 || instruments > 8) throw ConfigError("instruments must be in 1..8");
    if (!(p_z > 0.0 && p_z < 1.0)) throw ConfigError("p_z must lie in (0,1)");
    if (covariates < 0) throw ConfigError("covariates must be >= 0");
    if (static_cast<int>(outcome.theta.size()) != covariates && !outcome.theta.empty())
        throw ConfigError("theta must have one entry per covariate");
    if (static_cast<int>(sel.kappa.size()) != covariates && !sel.kappa.empty())
        throw ConfigError("kappa must have one entry per covariate");
    if (!(std::abs(sel.rho_v) <= 1.0)) throw ConfigError("rho_v must lie in [-1,1]");
    if (sel.kind == TreatmentKind::Continuous) {
        if (instruments != 1 || sel.mu.size() != 2) throw ConfigError("continuous selection needs mu for z = 0, 1");
        if (!(sel.sd > 0)) throw ConfigError("selection sd must be positive");
        return;
    }
    if (sel.pi.empty()) throw ConfigError("discrete selection needs propensities pi");
    if (sel.kind == TreatmentKind::Binary && sel.pi.size() != 1)
        throw ConfigError("binary selection takes a single row of propensities");
    if (sel.kind == TreatmentKind::Ordered && instruments != 1)
        throw ConfigError("several instruments are supported for binary treatment only");
    for (std::size_t l = 0; l < sel.pi.size(); ++l) {
        if (static_cast<int>(sel.pi[l].size()) != cells)
            throw ConfigError("propensity rows need one entry per instrument cell");
        for (std::size_t c = 0; c < sel.pi[l].size(); ++c) {
            const double p = sel.pi[l][c];
            if (!(p > 0.0 && p < 1.0)) throw ConfigError("propensities must lie in (0,1)");
            if (l > 0 && !(p > sel.pi[l - 1][c])) throw ConfigError("ordered thresholds must increase in d");
        }
    }
}

// ---------------------------------------------------------------- simulation

SimulatedData simulate(const DgpSpec& spec, std::size_t n, std::uint64_t seed, int threads, bool keep_latent) {
    spec.validate();
    const Sampler sampler(spec.outcome);
    const std::size_t k = static_cast<std::size_t>(spec.covariates);
    SimulatedData out;
    Dataset& data = out.data;
    data.y.resize(n);
    data.d.resize(n);
    data.z.resize(n);
    data.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
    if (keep_latent) {
        out.v0.resize(n);
        out.v1.resize(n);
        out.d0.resize(n);
        out.d1.resize(n);
    }
    const auto& sel = spec.selection;
    const auto& law = spec.outcome;
    const double rv = sel.rho_v, rv_c = std::sqrt(std::max(0.0, 1.0 - rv * rv));

    parallel_for(n, threads, [&](std::size_t i) {
        CounterRng rng(seed, i);
        std::vector<double> x(k);
        for (std::size_t j = 0; j < k; ++j) x[j] = rng.normal();
        int z = 0;
        for (int j = 0; j < spec.instruments; ++j) z = (z << 1) | (rng.uniform() < spec.p_z ? 1 : 0);
        const double w0 = rng.normal();
        const double w1 = rv * w0 + rv_c * rng.normal();
        const double e = rng.normal();

        const double xb_sel = dot(sel.kappa, x);
        const double wz = (z & 1) ? w1 : w0;
        // With several instruments every cell shares the latent W of its last bit.
        const double d = sel.draw(Phi(wz), z, xb_sel);
        const double u = sampler.invert(e, wz);

        data.y[i] = law.loc(d) + dot(law.theta, x) + u;
        data.d[i] = d;
        data.z[i] = z;
        for (std::size_t j = 0; j < k; ++j) data.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x[j];
        if (keep_latent) {
            out.v0[i] = Phi(w0);
            out.v1[i] = Phi(w1);
            out.d0[i] = sel.draw(out.v0[i], z & ~1, xb_sel);
            out.d1[i] = sel.draw(out.v1[i], z | 1, xb_sel);
        }
    });
    return out;
}

// ---------------------------------------------------------------- truth

double true_cdf_given_x(const DgpSpec& spec, double d, double y, const std::vector<double>& x) {
    const auto& law = spec.outcome;
    return law.marginal.cdf(y - law.loc(d) - dot(law.theta, x));
}

double true_cdf(const DgpSpec& spec, double d, double y) {
    const auto& law = spec.outcome;
    const double s = spec.covariates > 0 ? norm2(law.theta) : 0.0;
    const double c = y - law.loc(d);
    const Marginal& m = law.marginal;
    if (s == 0.0) return m.cdf(c);
    if (m.kind == Marginal::Kind::Gaussian) return Phi((c - m.mean) / std::sqrt(m.sd * m.sd + s * s));
    double out = 0.0;
    for (std::size_t k = 0; k < m.atoms.size(); ++k) out += m.probs[k] * Phi((c - m.atoms[k]) / s);
    return out;
}

double true_rho(const DgpSpec& spec, double d, double y, const std::vector<double>& x) {
    const auto& law = spec.outcome;
    return law.rho(y - law.loc(d) - dot(law.theta, x));
}

double true_mean(const DgpSpec& spec, double d) {
    const Marginal& m = spec.outcome.marginal;
    double mu = m.mean;
    if (m.kind == Marginal::Kind::Step) {
        mu = 0.0;
        for (std::size_t k = 0; k < m.atoms.size(); ++k) mu += m.probs[k] * m.atoms[k];
    }
    return spec.outcome.loc(d) + mu;
}

double true_qsf(const DgpSpec& spec, double d, double tau) {
    if (!(tau > 0.0 && tau < 1.0)) throw DomainError("tau must lie in (0,1)");
    const auto& law = spec.outcome;
    const double s = spec.covariates > 0 ? norm2(law.theta) : 0.0;
    if (s == 0.0) return law.loc(d) + law.marginal.quantile(tau);
    if (law.marginal.kind == Marginal::Kind::Gaussian) {
        const Marginal& m = law.marginal;
        return law.loc(d) + m.mean + std::sqrt(m.sd * m.sd + s * s) * Phi_inv(tau);
    }
    double lo = law.loc(d) + law.marginal.lo() - 10.0 * s, hi = law.loc(d) + law.marginal.hi() + 10.0 * s;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (true_cdf(spec, d, mid) >= tau)
            hi = mid;
        else
            lo = mid;
    }
    return hi;
}

ObservableCdfs observable_cdfs(const DgpSpec& spec, double y, double d, int z, const std::vector<double>& x) {
    const auto& sel = spec.selection;
    const auto& law = spec.outcome;
    const double xb = dot(sel.kappa, x);
    const double u = y - law.loc(d) - dot(law.theta, x);
    const double F = law.marginal.cdf(u);
    const double r = Corr::clamp(law.rho(u)).value;
    ObservableCdfs out;
    if (sel.kind == TreatmentKind::Continuous) {
        out.treatment = sel.cdf(d, z, xb);
        const double s = std::sqrt((1.0 - r) * (1.0 + r));
        out.joint = Phi((normal_score(law.marginal, u) - r * Phi_inv(out.treatment)) / s);
        return out;
    }
    const int lev = level_of(sel, d);
    const double hi = sel.threshold(lev, z, xb), lo = sel.threshold(lev - 1, z, xb);
    out.treatment = sel.kind == TreatmentKind::Binary ? sel.threshold(1, z, xb) : hi;
    out.joint = C(Family::Gaussian, F, hi, r) - C(Family::Gaussian, F, lo, r);
    return out;
}

double joint_cdf_quadrature(const OutcomeLaw& law, double d, double y, double v) {
    if (!(v > 0.0 && v < 1.0)) throw DomainError("v must lie in (0,1)");
    const double u = y - law.loc(d);
    const double r = Corr::clamp(law.rho(u)).value;
    const double s = std::sqrt((1.0 - r) * (1.0 + r));
    const double score = normal_score(law.marginal, u);
    auto f = [&](double w) { return Phi((score - r * w) / s) * phi(w); };
    return integrate(f, -40.0, Phi_inv(v));
}

double control_function_gaussian(double rho, double pi) { return -rho * phi(Phi_inv(pi)) / pi; }

double control_function(const OutcomeLaw& law, double pi) {
    if (!(pi > 0.0 && pi < 1.0)) throw DomainError("pi must lie in (0,1)");
    const Marginal& m = law.marginal;
    // E[Y | V <= pi] - E[Y] = integral of G(u) - P(U <= u, V <= pi) / pi.
    auto f = [&](double u) {
        const double G = m.cdf(u);
        return G - C(Family::Gaussian, G, pi, Corr::clamp(law.rho(u)).value) / pi;
    };
    if (m.kind == Marginal::Kind::Gaussian) {
        // Fixed Gauss-Legendre panels: the integrand is smooth, and a relative
        // tolerance would chase tiny values as pi -> 1.
        const double a = m.quantile(1e-13), b = m.quantile(1.0 - 1e-13);
        const int panels = 64;
        const double h = (b - a) / panels;
        double out = 0.0;
        for (int k = 0; k < panels; ++k)
            out += boost::math::quadrature::gauss<double, 20>::integrate(f, a + k * h, a + (k + 1) * h);
        return out;
    }
    double out = 0.0;
    for (std::size_t k = 0; k + 1 < m.atoms.size(); ++k) out += f(m.atoms[k]) * (m.atoms[k + 1] - m.atoms[k]);
    return out;
}

ComplianceShares compliance_shares(const DgpSpec& spec, std::size_t n, std::uint64_t seed, int threads) {
    spec.validate();
    const auto& sel = spec.selection;
    if (sel.kind == TreatmentKind::Continuous) throw DomainError("compliance shares need a discrete treatment");
    const int K = sel.levels();
    const std::size_t k = static_cast<std::size_t>(spec.covariates);
    const double rv = sel.rho_v, rv_c = std::sqrt(std::max(0.0, 1.0 - rv * rv));
    // diff[i] = D1 - D0 in treatment values (binary levels run opposite to D).
    std::vector<int> diff(n);
    parallel_for(n, threads, [&](std::size_t i) {
        CounterRng rng(seed, i);
        std::vector<double> x(k);
        for (std::size_t j = 0; j < k; ++j) x[j] = rng.normal();
        const double w0 = rng.normal();
        const double w1 = rv * w0 + rv_c * rng.normal();
        const double xb = dot(sel.kappa, x);
        diff[i] = static_cast<int>(std::lround(sel.draw(Phi(w1), 1, xb) - sel.draw(Phi(w0), 0, xb)));
    });
    ComplianceShares out;
    out.n = n;
    out.complier.assign(static_cast<std::size_t>(K - 1), 0.0);
    out.defier.assign(static_cast<std::size_t>(K - 1), 0.0);
    for (int dd : diff) {
        if (dd > 0) out.complier[static_cast<std::size_t>(dd - 1)] += 1.0;
        if (dd < 0) out.defier[static_cast<std::size_t>(-dd - 1)] += 1.0;
    }
    const double nn = static_cast<double>(n);
    for (auto& v : out.complier) v /= nn;
    for (auto& v : out.defier) v /= nn;
    out.complier_total = std::accumulate(out.complier.begin(), out.complier.end(), 0.0);
    out.defier_total = std::accumulate(out.defier.begin(), out.defier.end(), 0.0);
    const double pc = out.complier_total, pd = out.defier_total;
    out.complier_se = std::sqrt(pc * (1.0 - pc) / nn);
    out.defier_se = std::sqrt(pd * (1.0 - pd) / nn);
    out.diff_se = std::sqrt(std::max(0.0, pc + pd - (pc - pd) * (pc - pd)) / nn);
    // The Gaussian copula of (V0, V1) is symmetric.
    out.exchangeable = true;
    return out;
}

double validity_defect(const OutcomeLaw& law) {
    const Sampler s(law);
    double worst = 0.0;
    for (int q = 0; q <= 40; ++q) {
        const double w = -kWMax + 2.0 * kWMax * q / 40.0;
        for (std::size_t j = 0; j + 1 < s.u.size(); ++j)
            worst = std::max(worst, Phi(s.s(j, w)) - Phi(s.s(j + 1, w)));
    }
    return worst;
}

}  // namespace copiv
