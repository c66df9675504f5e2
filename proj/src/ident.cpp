#include "copiv/ident.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "copiv/copulas.hpp"
#include "copiv/errors.hpp"
#include "copiv/gauss.hpp"
#include "copiv/rng.hpp"

namespace copiv {

namespace {

constexpr Family G = Family::Gaussian;
const double kSMax = std::atanh(1.0 - kCorrEps);
constexpr double kXMax = 7.0;
constexpr double kTol = 1e-14;        // target residual
constexpr double kAccept = 1e-11;     // accepted residual after stalling
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

struct Eval2 {
    Vec2 r;
    Mat2 J;
};

// Cell probability C(F, hi; rho) - C(F, lo; rho) and its derivatives in (x, s)
// with F = Phi(x), rho = tanh(s).
struct Cell {
    double lo, hi;
    double value(double F, double r) const { return C(G, F, hi, r) - C(G, F, lo, r); }
    double dF(double F, double r) const { return C1(G, F, hi, r) - C1(G, F, lo, r); }
    double dr(double F, double r) const { return Crho(G, F, hi, r) - Crho(G, F, lo, r); }
};

Vec2 clamp_theta(Vec2 th) {
    th(0) = std::clamp(th(0), -kXMax, kXMax);
    th(1) = std::clamp(th(1), -kSMax, kSMax);
    return th;
}

Eval2 eval_cells(const std::array<Cell, 2>& cells, const Vec2& target, const Vec2& th) {
    const double F = Phi(th(0)), r = std::tanh(th(1));
    Eval2 e;
    for (int z = 0; z < 2; ++z) {
        e.r(z) = cells[static_cast<std::size_t>(z)].value(F, r) - target(z);
        e.J(z, 0) = cells[static_cast<std::size_t>(z)].dF(F, r) * phi(th(0));
        e.J(z, 1) = cells[static_cast<std::size_t>(z)].dr(F, r) * (1.0 - r * r);
    }
    return e;
}

// Damped Newton; returns the final sup-norm residual.
template <class Fn>
double newton2(Fn f, Vec2& th, int max_iter, double tol, int& iters) {
    Eval2 e = f(th);
    double res = e.r.lpNorm<Eigen::Infinity>();
    for (iters = 0; iters < max_iter && res > tol; ++iters) {
        Vec2 step = e.J.fullPivLu().solve(-e.r);
        if (!step.allFinite()) break;
        const double big = step.lpNorm<Eigen::Infinity>();
        if (big > 2.0) step *= 2.0 / big;
        double t = 1.0;
        bool ok = false;
        for (int h = 0; h < 40; ++h, t *= 0.5) {
            const Vec2 cand = clamp_theta(th + t * step);
            const Eval2 ec = f(cand);
            const double rc = ec.r.lpNorm<Eigen::Infinity>();
            if (std::isfinite(rc) && rc < res) {
                th = cand;
                e = ec;
                res = rc;
                ok = true;
                break;
            }
        }
        if (!ok) break;
    }
    return res;
}

void fill_jacobian(SolverDiagnostics& diag, const std::array<Cell, 2>& cells, double F, double r,
                   const std::array<double, 2>& order_key) {
    const int first = order_key[0] >= order_key[1] ? 0 : 1;
    const int rows[2] = {first, 1 - first};
    for (int k = 0; k < 2; ++k) {
        const Cell& c = cells[static_cast<std::size_t>(rows[k])];
        diag.jacobian[static_cast<std::size_t>(2 * k)] = c.dF(F, r);
        diag.jacobian[static_cast<std::size_t>(2 * k + 1)] = c.dr(F, r);
    }
    const auto& J = diag.jacobian;
    diag.jacobian_det = J[0] * J[3] - J[1] * J[2];
    diag.p_matrix = J[0] > 0 && J[3] > 0 && diag.jacobian_det > 0;
}

void check_prob(double p, const char* what) {
    if (std::isnan(p) || p <= 0.0 || p >= 1.0) throw DomainError(std::string(what) + " must lie in (0,1)");
}

// Lower-cell system C(F, pi_z; rho) = p_z.
IdentSolution solve_lower_cell(std::array<double, 2> p, std::array<double, 2> pi) {
    for (int z = 0; z < 2; ++z) {
        check_prob(pi[static_cast<std::size_t>(z)], "cell propensity");
        const double pz = p[static_cast<std::size_t>(z)], cz = pi[static_cast<std::size_t>(z)];
        if (std::isnan(pz)) throw DomainError("cell probability is NaN");
        if (pz <= 0.0)
            throw InfeasibleError("P(Y<=y, D=d | Z=" + std::to_string(z) + ") must be > 0 (lower bound)");
        if (pz >= cz)
            throw InfeasibleError("P(Y<=y, D=d | Z=" + std::to_string(z) +
                                  ") must be < P(D=d | Z=" + std::to_string(z) + ") (upper bound)");
    }
    if (std::abs(pi[1] - pi[0]) < 1e-6)
        throw WeakInstrumentError("|P(D=1|Z=1) - P(D=1|Z=0)| < 1e-6");

    const std::array<Cell, 2> cells{Cell{0.0, pi[0]}, Cell{0.0, pi[1]}};
    const Vec2 target(p[0], p[1]);
    auto f = [&](const Vec2& th) { return eval_cells(cells, target, th); };

    IdentSolution sol;
    const double F0 = std::clamp(0.5 * (p[0] / pi[0] + p[1] / pi[1]), 0.01, 0.99);
    Vec2 th(Phi_inv(F0), 0.0);
    int it = 0;
    double res = newton2(f, th, 100, kTol, it);
    if (res > kAccept) {
        // Grid seeding over (F, rho).
        sol.diag.grid_fallback = true;
        std::vector<std::pair<double, Vec2>> seeds;
        for (int i = 0; i < 40; ++i)
            for (int j = 0; j < 40; ++j) {
                const Vec2 s(Phi_inv((i + 0.5) / 40.0), std::atanh(-0.975 + 1.95 * j / 39.0));
                seeds.emplace_back(f(s).r.lpNorm<Eigen::Infinity>(), s);
            }
        std::partial_sort(seeds.begin(), seeds.begin() + 5, seeds.end(),
                          [](const auto& a, const auto& b) { return a.first < b.first; });
        for (int k = 0; k < 5 && res > kAccept; ++k) {
            Vec2 t2 = seeds[static_cast<std::size_t>(k)].second;
            int it2 = 0;
            const double r2 = newton2(f, t2, 200, kTol, it2);
            it += it2;
            if (r2 < res) {
                res = r2;
                th = t2;
            }
        }
    }
    if (!(res <= kAccept))
        throw InfeasibleError("no (F, rho) reproduces both cell probabilities (residual " + std::to_string(res) + ")");
    sol.F = Phi(th(0));
    sol.rho = std::tanh(th(1));
    sol.diag.iterations = it;
    sol.diag.residual = res;
    sol.diag.boundary = std::abs(th(1)) >= kSMax;
    fill_jacobian(sol.diag, cells, sol.F, sol.rho, pi);
    return sol;
}

}  // namespace

IdentSolution solve_binary(int d, std::array<double, 2> p, std::array<double, 2> pi) {
    if (d != 0 && d != 1) throw DomainError("binary treatment level must be 0 or 1");
    if (d == 1) return solve_lower_cell(p, pi);
    check_prob(pi[0], "propensity");
    check_prob(pi[1], "propensity");
    // P(Y<=y, D=0 | z) = C(F, 1 - pi(z); -rho).
    IdentSolution s = solve_lower_cell(p, {1.0 - pi[0], 1.0 - pi[1]});
    s.rho = -s.rho;
    return s;
}

IdentSolution solve_ordered(std::array<double, 2> g, std::array<double, 2> lower, std::array<double, 2> upper) {
    const bool first = lower[0] == 0.0 && lower[1] == 0.0;
    const bool last = upper[0] == 1.0 && upper[1] == 1.0;
    if (first && last) throw DomainError("ordered level needs at least one interior threshold");
    if (first) return solve_binary(1, g, upper);
    if (last) return solve_binary(0, g, lower);
    for (int z = 0; z < 2; ++z) {
        const auto zz = static_cast<std::size_t>(z);
        check_prob(lower[zz], "lower threshold");
        check_prob(upper[zz], "upper threshold");
        if (!(upper[zz] > lower[zz])) throw DomainError("thresholds must increase in d");
        if (g[zz] <= 0.0)
            throw InfeasibleError("P(Y<=y, D=d | Z=" + std::to_string(z) + ") must be > 0 (lower bound)");
        if (g[zz] >= upper[zz] - lower[zz])
            throw InfeasibleError("P(Y<=y, D=d | Z=" + std::to_string(z) + ") must be < P(D=d | Z=" +
                                  std::to_string(z) + ") (upper bound)");
    }
    const double dl = lower[0] - lower[1], du = upper[0] - upper[1];
    if (dl == 0.0 || du == 0.0 || (dl > 0) != (du > 0))
        throw AssumptionError("U_OC: F_{D|Z}(.|0) - F_{D|Z}(.|1) changes sign across the thresholds of this level");

    const std::array<Cell, 2> cells{Cell{lower[0], upper[0]}, Cell{lower[1], upper[1]}};
    const Vec2 target(g[0], g[1]);

    IdentSolution sol;
    const double F0 = std::clamp(0.5 * (g[0] / (upper[0] - lower[0]) + g[1] / (upper[1] - lower[1])), 0.01, 0.99);
    Vec2 th(Phi_inv(F0), 0.0);
    const Vec2 start_target = eval_cells(cells, Vec2::Zero(), th).r;

    // Newton homotopy on the target: G(theta) = start + t (target - start),
    // started from rho = 0 where the solution is known.
    double t = 0.0, h = 0.1;
    int total = 0;
    sol.diag.path.push_back(0.0);
    while (t < 1.0) {
        const double tn = std::min(1.0, t + h);
        const Vec2 tgt = start_target + tn * (target - start_target);
        auto f = [&](const Vec2& x) { return eval_cells(cells, tgt, x); };
        // Euler predictor.
        const Eval2 e0 = eval_cells(cells, start_target + t * (target - start_target), th);
        Vec2 pred = th + e0.J.fullPivLu().solve((tn - t) * (target - start_target));
        if (!pred.allFinite()) pred = th;
        pred = clamp_theta(pred);
        int it = 0;
        const double tol = tn < 1.0 ? 1e-10 : kTol;
        const double res = newton2(f, pred, tn < 1.0 ? 8 : 100, tol, it);
        total += it;
        if (res <= (tn < 1.0 ? 1e-10 : kAccept)) {
            th = pred;
            t = tn;
            sol.diag.path.push_back(t);
            h = std::min(0.25, h * 1.5);
        } else {
            h *= 0.5;
            if (h < 1e-5) {
                std::ostringstream os;
                os << "homotopy step fell below 1e-5 at t = " << t << "; path:";
                for (double p : sol.diag.path) os << ' ' << p;
                throw NonConvergenceError(os.str());
            }
        }
    }
    const Eval2 fin = eval_cells(cells, target, th);
    sol.F = Phi(th(0));
    sol.rho = std::tanh(th(1));
    sol.diag.iterations = total;
    sol.diag.residual = fin.r.lpNorm<Eigen::Infinity>();
    sol.diag.boundary = std::abs(th(1)) >= kSMax;
    fill_jacobian(sol.diag, cells, sol.F, sol.rho, {upper[0], upper[1]});
    return sol;
}

ContinuousSolution solve_continuous_index(double s0, double s1, double t0, double t1, double min_contrast) {
    if (!std::isfinite(s0) || !std::isfinite(s1) || !std::isfinite(t0) || !std::isfinite(t1))
        throw DomainError("continuous solver inputs must be finite");
    const double dt = t1 - t0;
    if (std::abs(dt) < min_contrast) throw WeakInstrumentError("|Phi^-1 F_{D|Z}(d|1) - Phi^-1 F_{D|Z}(d|0)| too small");
    ContinuousSolution out;
    out.b = (s1 - s0) / dt;
    out.a = (s0 * t1 - s1 * t0) / dt;
    const double nrm = std::sqrt(1.0 + out.b * out.b);
    out.F = Phi(out.a / nrm);
    out.rho = -out.b / nrm;
    return out;
}

ContinuousSolution solve_continuous(double FyDZ0, double FyDZ1, double FD0, double FD1) {
    check_prob(FyDZ0, "F_{Y|D,Z}(y|d,0)");
    check_prob(FyDZ1, "F_{Y|D,Z}(y|d,1)");
    check_prob(FD0, "F_{D|Z}(d|0)");
    check_prob(FD1, "F_{D|Z}(d|1)");
    return solve_continuous_index(Phi_inv(FyDZ0), Phi_inv(FyDZ1), Phi_inv(FD0), Phi_inv(FD1));
}

SpearmanSolution solve_continuous_spearman(double FyDZ0, double FyDZ1, double FD0, double FD1) {
    check_prob(FyDZ0, "F_{Y|D,Z}(y|d,0)");
    check_prob(FyDZ1, "F_{Y|D,Z}(y|d,1)");
    check_prob(FD0, "F_{D|Z}(d|0)");
    check_prob(FD1, "F_{D|Z}(d|1)");
    auto w = [](double p) { return (1.0 - 2.0 * p) / std::sqrt(p * (1.0 - p)); };
    const double w0 = w(FD0), w1 = w(FD1);
    if (std::abs(w0 - w1) < 1e-10 * (1.0 + std::abs(w0)))
        throw WeakInstrumentError("degenerate Spearman weights: w(F_{D|Z}(d|0)) == w(F_{D|Z}(d|1))");
    SpearmanSolution out;
    out.F = (FyDZ1 * w0 - FyDZ0 * w1) / (w0 - w1);
    if (!(out.F > 0.0 && out.F < 1.0)) throw InfeasibleError("recovered F outside (0,1)");
    const double sc = std::sqrt(out.F * (1.0 - out.F));
    out.rho_z0 = w0 != 0.0 ? 2.0 * (FyDZ0 - out.F) / (w0 * sc) : kNaN;
    out.rho_z1 = w1 != 0.0 ? 2.0 * (FyDZ1 - out.F) / (w1 * sc) : kNaN;
    out.rho = std::isnan(out.rho_z0) ? out.rho_z1 : out.rho_z0;
    return out;
}

MultiIVSolution solve_multi_iv(int d, const std::vector<double>& p, const std::vector<double>& pi) {
    if (p.size() != pi.size() || p.size() < 2) throw DomainError("multi-IV needs matching cell vectors");
    const std::size_t m = p.size();
    if ((m & (m - 1)) != 0) throw DomainError("number of instrument cells must be a power of two");
    const IdentSolution base = solve_binary(d, {p[0], p[1]}, {pi[0], pi[1]});
    MultiIVSolution out;
    out.F = base.F;
    out.rho0 = base.rho;
    out.rho.resize(m);
    out.F_discrepancy.assign(m, 0.0);
    out.rho_discrepancy.assign(m, 0.0);
    for (std::size_t c = 0; c < m; ++c) {
        if (d == 1)
            out.rho[c] = solve_rho(G, p[c], base.F, pi[c]).rho;
        else
            out.rho[c] = -solve_rho(G, p[c], base.F, 1.0 - pi[c]).rho;
        if (c < 2) continue;
        try {
            const IdentSolution pair = solve_binary(d, {p[0], p[c]}, {pi[0], pi[c]});
            out.F_discrepancy[c] = pair.F - base.F;
            out.rho_discrepancy[c] = pair.rho - base.rho;
        } catch (const Error&) {
            out.F_discrepancy[c] = kNaN;
            out.rho_discrepancy[c] = kNaN;
        }
    }
    return out;
}

// ---------------------------------------------------------------- alternative systems

namespace {

using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;

struct Eval4 {
    Vec4 r;
    Mat4 J;   // derivatives in (x_a, x_b, s0, s1)
    Mat4 Jp;  // derivatives in (F_a, F_b, rho0, rho1)
};

Eval4 eval_alt(AltSystem kind, const AltInputs& in, const Vec4& th) {
    const double Fa = Phi(th(0)), Fb = Phi(th(1));
    const double r[2] = {std::tanh(th(2)), std::tanh(th(3))};
    Eval4 e;
    e.Jp.setZero();
    for (int z = 0; z < 2; ++z) {
        const auto zz = static_cast<std::size_t>(z);
        const double pz = in.pi[zz];
        const double rz = r[z];
        // First equation of cell z: C(F_a, pi; rho_z).
        e.r(2 * z) = C(G, Fa, pz, rz) - in.first[zz];
        e.Jp(2 * z, 0) = C1(G, Fa, pz, rz);
        e.Jp(2 * z, 2 + z) = Crho(G, Fa, pz, rz);
        if (kind == AltSystem::WithinLevels) {
            e.r(2 * z + 1) = C(G, Fb, pz, rz) - in.second[zz];
            e.Jp(2 * z + 1, 1) = C1(G, Fb, pz, rz);
            e.Jp(2 * z + 1, 2 + z) = Crho(G, Fb, pz, rz);
        } else {
            e.r(2 * z + 1) = C(G, Fb, 1.0 - pz, -rz) - in.second[zz];
            e.Jp(2 * z + 1, 1) = C1(G, Fb, 1.0 - pz, -rz);
            e.Jp(2 * z + 1, 2 + z) = -Crho(G, Fb, 1.0 - pz, -rz);
        }
    }
    const Vec4 scale(phi(th(0)), phi(th(1)), 1.0 - r[0] * r[0], 1.0 - r[1] * r[1]);
    e.J = e.Jp * scale.asDiagonal();
    return e;
}

double newton4(AltSystem kind, const AltInputs& in, Vec4& th, int max_iter) {
    auto clamp4 = [](Vec4 v) {
        for (int k = 0; k < 2; ++k) v(k) = std::clamp(v(k), -kXMax, kXMax);
        for (int k = 2; k < 4; ++k) v(k) = std::clamp(v(k), -kSMax, kSMax);
        return v;
    };
    Eval4 e = eval_alt(kind, in, th);
    double res = e.r.lpNorm<Eigen::Infinity>();
    for (int it = 0; it < max_iter && res > kTol; ++it) {
        Vec4 step = e.J.completeOrthogonalDecomposition().solve(-e.r);
        if (!step.allFinite()) break;
        const double big = step.lpNorm<Eigen::Infinity>();
        if (big > 2.0) step *= 2.0 / big;
        double t = 1.0;
        bool ok = false;
        for (int h = 0; h < 40; ++h, t *= 0.5) {
            const Vec4 cand = clamp4(th + t * step);
            const Eval4 ec = eval_alt(kind, in, cand);
            const double rc = ec.r.lpNorm<Eigen::Infinity>();
            if (std::isfinite(rc) && rc < res) {
                th = cand;
                e = ec;
                res = rc;
                ok = true;
                break;
            }
        }
        if (!ok) break;
    }
    return res;
}

}  // namespace

AltSolution solve_alt_system(AltSystem kind, const AltInputs& in, std::uint64_t seed) {
    for (int z = 0; z < 2; ++z) {
        const auto zz = static_cast<std::size_t>(z);
        check_prob(in.pi[zz], "propensity");
        check_prob(in.first[zz], "cell probability");
        check_prob(in.second[zz], "cell probability");
    }
    if (std::abs(in.pi[1] - in.pi[0]) < 1e-6) throw WeakInstrumentError("|P(D=1|Z=1) - P(D=1|Z=0)| < 1e-6");
    const double tol = 1e-8;
    auto naive = [&](int which) {
        double s = 0.0;
        for (int z = 0; z < 2; ++z) {
            const auto zz = static_cast<std::size_t>(z);
            const double width = (which == 1 && kind == AltSystem::BetweenLevels) ? 1.0 - in.pi[zz] : in.pi[zz];
            s += (which == 0 ? in.first[zz] : in.second[zz]) / width;
        }
        return std::clamp(0.5 * s, 0.02, 0.98);
    };
    Vec4 th(Phi_inv(naive(0)), Phi_inv(naive(1)), 0.0, 0.0);
    AltSolution out;
    double res = newton4(kind, in, th, 200);
    CounterRng rng(seed, 0x5eed);
    while (res > tol && out.restarts < 5) {
        ++out.restarts;
        Vec4 t2(Phi_inv(0.05 + 0.9 * rng.uniform()), Phi_inv(0.05 + 0.9 * rng.uniform()),
                std::atanh(-0.9 + 1.8 * rng.uniform()), std::atanh(-0.9 + 1.8 * rng.uniform()));
        const double r2 = newton4(kind, in, t2, 200);
        if (r2 < res) {
            res = r2;
            th = t2;
        }
    }
    if (res > tol) throw NonConvergenceError("alternative system residual " + std::to_string(res) + " after restarts");
    const Eval4 e = eval_alt(kind, in, th);
    out.F_first = Phi(th(0));
    out.F_second = Phi(th(1));
    out.rho_z0 = std::tanh(th(2));
    out.rho_z1 = std::tanh(th(3));
    out.residual = res;
    out.jacobian_det = e.Jp.determinant();
    out.rank_warning = std::abs(out.jacobian_det) < 1e-8;
    return out;
}

// ---------------------------------------------------------------- assumption checks

AssumptionReport check_assumptions(const std::vector<std::array<double, 2>>& thresholds, TreatmentKind kind) {
    AssumptionReport rep;
    rep.kind = kind;
    if (thresholds.empty()) throw DomainError("no thresholds to check");
    rep.min_gap = std::numeric_limits<double>::infinity();
    rep.min_probit_gap = std::numeric_limits<double>::infinity();
    int pos = 0, neg = 0;
    for (std::size_t l = 0; l < thresholds.size(); ++l) {
        const double f0 = thresholds[l][0], f1 = thresholds[l][1];
        rep.points.push_back(static_cast<double>(l + 1));
        rep.F0.push_back(f0);
        rep.F1.push_back(f1);
        rep.min_gap = std::min(rep.min_gap, std::abs(f1 - f0));
        rep.min_probit_gap = std::min(rep.min_probit_gap, std::abs(Phi_inv(f1) - Phi_inv(f0)));
        if (f0 > f1) ++pos;
        if (f0 < f1) ++neg;
    }
    rep.rel_ok = rep.min_gap >= 1e-6;
    if (!rep.rel_ok) rep.messages.push_back("REL: first-stage contrast below 1e-6 at some threshold");
    if (kind == TreatmentKind::Ordered || kind == TreatmentKind::Binary) {
        const int n = static_cast<int>(thresholds.size());
        rep.uoc_direction = pos == n ? 1 : (neg == n ? -1 : 0);
        rep.uoc_ok = rep.uoc_direction != 0;
        if (!rep.uoc_ok) {
            const bool majority_pos = pos >= neg;
            for (std::size_t l = 0; l < thresholds.size(); ++l) {
                const double diff = thresholds[l][0] - thresholds[l][1];
                if ((majority_pos && diff <= 0) || (!majority_pos && diff >= 0)) rep.uoc_violations.push_back(l + 1.0);
            }
            rep.messages.push_back("U_OC: F_{D|Z}(d|0) - F_{D|Z}(d|1) changes sign across d");
        }
    }
    return rep;
}

AssumptionReport check_assumptions(const Dataset& data, TreatmentKind kind, const CheckOptions& opt) {
    data.validate();
    const std::size_t n = data.n();
    const int cells = 1 << opt.instruments;
    for (double z : data.z) {
        if (z != std::floor(z) || z < 0 || z >= cells)
            throw ConfigError("instrument column must hold cell codes 0.." + std::to_string(cells - 1));
    }
    // Status-quo pair for the first stage.
    auto cdf_at = [&](double d, int z) {
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (static_cast<int>(data.z[i]) != z) continue;
            den += 1.0;
            if (data.d[i] <= d) num += 1.0;
        }
        if (den == 0.0) throw ConfigError("instrument cell " + std::to_string(z) + " is empty");
        return num / den;
    };
    AssumptionReport rep;
    if (kind == TreatmentKind::Continuous) {
        std::vector<double> pts = opt.d_grid;
        if (pts.empty()) pts = empirical_quantiles(data.d, prob_grid(9, 0.1, 0.9));
        std::vector<std::array<double, 2>> th;
        for (double d : pts) th.push_back({cdf_at(d, 0), cdf_at(d, 1)});
        rep = check_assumptions(th, kind);
        rep.points = pts;
        rep.rel_ok = rep.min_gap >= opt.rel_tol;
        return rep;
    }
    const auto lv = support(data.d);
    std::vector<std::array<double, 2>> th;
    if (kind == TreatmentKind::Binary) {
        if (lv.size() != 2 || lv[0] != 0.0 || lv[1] != 1.0) throw ConfigError("binary treatment must take values 0 and 1");
        th.push_back({1.0 - cdf_at(0.0, 0), 1.0 - cdf_at(0.0, 1)});
    } else {
        for (std::size_t l = 0; l + 1 < lv.size(); ++l) th.push_back({cdf_at(lv[l], 0), cdf_at(lv[l], 1)});
    }
    rep = check_assumptions(th, kind);
    if (kind == TreatmentKind::Binary) {
        rep.uoc_ok = true;
        rep.points = {1.0};
    } else {
        rep.points.assign(lv.begin(), lv.end() - 1);
    }
    rep.rel_ok = rep.min_gap >= opt.rel_tol;

    if (opt.instruments > 1 && kind == TreatmentKind::Binary) {
        std::vector<double> ys = opt.y_grid;
        if (ys.empty()) ys = empirical_quantiles(data.y, prob_grid(9, 0.1, 0.9));
        auto overid = [&](const std::vector<std::size_t>& idx, std::vector<double>& disc) {
            std::vector<double> cnt(static_cast<std::size_t>(cells), 0.0), trt(static_cast<std::size_t>(cells), 0.0);
            for (std::size_t i : idx) {
                const auto c = static_cast<std::size_t>(data.z[i]);
                cnt[c] += 1.0;
                trt[c] += data.d[i];
            }
            std::vector<double> pi(static_cast<std::size_t>(cells));
            for (std::size_t c = 0; c < pi.size(); ++c) pi[c] = trt[c] / std::max(cnt[c], 1.0);
            disc.clear();
            double mx = 0.0;
            for (double y : ys) {
                std::vector<double> p(static_cast<std::size_t>(cells), 0.0);
                for (std::size_t i : idx)
                    if (data.d[i] == 1.0 && data.y[i] <= y) p[static_cast<std::size_t>(data.z[i])] += 1.0;
                for (std::size_t c = 0; c < p.size(); ++c) p[c] /= std::max(cnt[c], 1.0);
                try {
                    const auto s = solve_multi_iv(1, p, pi);
                    for (std::size_t c = 2; c < p.size(); ++c) {
                        disc.push_back(s.F_discrepancy[c]);
                        if (std::isfinite(s.F_discrepancy[c])) mx = std::max(mx, std::abs(s.F_discrepancy[c]));
                    }
                } catch (const Error&) {
                    for (std::size_t c = 2; c < p.size(); ++c) disc.push_back(kNaN);
                }
            }
            return mx;
        };
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        rep.overid_max = overid(all, rep.overid_F);
        std::vector<double> stats;
        std::vector<double> tmp;
        for (int b = 0; b < opt.bootstrap; ++b) {
            CounterRng rng(opt.seed, static_cast<std::uint64_t>(b));
            std::vector<std::size_t> idx(n);
            for (auto& i : idx) i = static_cast<std::size_t>(rng.below(n));
            stats.push_back(overid(idx, tmp));
        }
        if (!stats.empty()) {
            double m = 0.0, v = 0.0;
            for (double s : stats) m += s;
            m /= static_cast<double>(stats.size());
            for (double s : stats) v += (s - m) * (s - m);
            rep.overid_bootstrap_sd = std::sqrt(v / std::max<std::size_t>(1, stats.size() - 1));
        }
    }
    return rep;
}

}  // namespace copiv
