#include "copiv/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "copiv/errors.hpp"
#include "copiv/gauss.hpp"
#include "copiv/ident.hpp"
#include "copiv/parallel.hpp"

namespace copiv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Phi2(x, y; r) and its derivatives in (x, r); y may be infinite.
struct Phi2Parts {
    double v = 0.0, dx = 0.0, dr = 0.0, dxx = 0.0, dxr = 0.0, drr = 0.0;
};

Phi2Parts phi2_parts(double x, double y, double r) {
    Phi2Parts p;
    if (y == -kInf) return p;
    if (y == kInf) {
        p.v = Phi(x);
        p.dx = phi(x);
        p.dxx = -x * p.dx;
        return p;
    }
    const double one = (1.0 - r) * (1.0 + r);
    const double s = std::sqrt(one);
    const double q = (y - r * x) / s;
    const double fx = phi(x);
    p.v = Phi2(x, y, r);
    p.dx = fx * Phi(q);
    p.dxx = -x * p.dx - fx * phi(q) * r / s;
    const double d = phi2(x, y, r);
    p.dr = d;
    p.dxr = d * (-(x - r * y) / one);
    const double quad = x * x - 2.0 * r * x * y + y * y;
    p.drr = d * (r / one + x * y / one - r * quad / (one * one));
    return p;
}

// P(Y > y, cell) = Phi2(-m, hi; -r) - Phi2(-m, lo; -r), evaluated directly for accuracy.
double upper_mass(double m, double lo, double hi, double r) {
    auto part = [&](double c) {
        if (c == -kInf) return 0.0;
        if (c == kInf) return Phi(-m);
        return Phi2(-m, c, -r);
    };
    return part(hi) - part(lo);
}

struct Step2Result {
    Eigen::VectorXd theta;
    GridDiagnostics diag;
};

Step2Result step2_newton(const Eigen::MatrixXd& B, const std::vector<CellUnit>& units, double total,
                         Eigen::VectorXd theta, double tol) {
    const Eigen::Index p = B.cols();
    const double u_max = std::atanh(1.0 - kCorrEps);
    auto clamp_u = [&](Eigen::VectorXd& t) {
        // Keep the dependence index inside the correlation clamp for intercept-only designs.
        if (p == 1) t(1) = std::clamp(t(1), -u_max, u_max);
    };
    Step2Result out;
    CellLikelihood cur = cell_loglik(B, units, total, theta);
    double gnorm = cur.grad.lpNorm<Eigen::Infinity>();
    int it = 0;
    const double target = std::min(tol, 1e-10);
    for (; it < 100 && gnorm > target; ++it) {
        Eigen::MatrixXd A = -cur.hess;
        Eigen::VectorXd step;
        double lambda = 0.0;
        for (int tries = 0; tries < 20; ++tries) {
            Eigen::LDLT<Eigen::MatrixXd> ldlt(A + lambda * Eigen::MatrixXd::Identity(2 * p, 2 * p));
            if (ldlt.info() == Eigen::Success && ldlt.isPositive() && (ldlt.vectorD().array() > 0).all()) {
                step = ldlt.solve(cur.grad);
                if (step.allFinite()) break;
            }
            lambda = lambda == 0.0 ? std::max(1e-8, 1e-6 * A.diagonal().cwiseAbs().maxCoeff()) : lambda * 10.0;
            step.resize(0);
        }
        if (step.size() == 0) break;
        const double big = step.lpNorm<Eigen::Infinity>();
        if (big > 5.0) step *= 5.0 / big;
        double t = 1.0;
        bool moved = false;
        for (int h = 0; h < 30; ++h, t *= 0.5) {
            Eigen::VectorXd cand = theta + t * step;
            clamp_u(cand);
            CellLikelihood c = cell_loglik(B, units, total, cand);
            if (std::isfinite(c.value) && c.value >= cur.value - 1e-12 * std::max(1.0, std::abs(cur.value))) {
                const double cg = c.grad.lpNorm<Eigen::Infinity>();
                if (c.value > cur.value || cg < gnorm) {
                    theta = cand;
                    cur = std::move(c);
                    gnorm = cg;
                    moved = true;
                    break;
                }
            }
        }
        if (!moved) break;
    }
    out.theta = theta;
    out.diag.iterations = it;
    out.diag.grad_norm = gnorm;
    out.diag.converged = gnorm <= tol && std::isfinite(cur.value);
    out.diag.flagged = !out.diag.converged;
    if (!out.diag.converged) {
        std::ostringstream os;
        os << "step-2 gradient " << gnorm << " after " << it << " iterations";
        out.diag.message = os.str();
    }
    return out;
}

Eigen::VectorXd obs_weights(const EstimateOptions& opt, std::size_t n) {
    if (opt.weights.size() == 0) return Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n));
    if (static_cast<std::size_t>(opt.weights.size()) != n) throw ConfigError("weight vector length differs from n");
    if ((opt.weights.array() < 0).any() || !opt.weights.allFinite()) throw ConfigError("weights must be finite and >= 0");
    return opt.weights;
}

void check_binary_instrument(const Dataset& data) {
    for (double z : data.z)
        if (z != 0.0 && z != 1.0) throw ConfigError("instrument must be binary (0/1); found value " + std::to_string(z));
}

void set_rows(PotentialOutcomeFit& fit, const Dataset& data, const Eigen::VectorXd& w) {
    if (fit.basis.covariates.empty()) {
        fit.x_rows = Eigen::MatrixXd::Zero(1, data.x.cols());
        fit.row_weights = Eigen::VectorXd::Ones(1);
    } else {
        fit.x_rows = data.x;
        fit.row_weights = w / w.sum();
    }
}

void interpolate_flagged(const std::vector<double>& grid, const std::vector<bool>& flagged, Eigen::MatrixXd& coef) {
    std::vector<std::size_t> good;
    for (std::size_t j = 0; j < grid.size(); ++j)
        if (!flagged[j]) good.push_back(j);
    if (good.empty()) return;
    for (std::size_t j = 0; j < grid.size(); ++j) {
        if (!flagged[j]) continue;
        auto it = std::lower_bound(good.begin(), good.end(), j);
        const auto J = static_cast<Eigen::Index>(j);
        if (it == good.begin()) {
            coef.row(J) = coef.row(static_cast<Eigen::Index>(*it));
        } else if (it == good.end()) {
            coef.row(J) = coef.row(static_cast<Eigen::Index>(good.back()));
        } else {
            const std::size_t hi = *it, lo = *(it - 1);
            const double t = (grid[j] - grid[lo]) / (grid[hi] - grid[lo]);
            coef.row(J) = (1.0 - t) * coef.row(static_cast<Eigen::Index>(lo)) + t * coef.row(static_cast<Eigen::Index>(hi));
        }
    }
}

std::vector<double> resolve_y_grid(const Dataset& data, const EstimateOptions& opt) {
    std::vector<double> g = opt.y_grid.empty() ? default_grid(data.y) : opt.y_grid;
    std::sort(g.begin(), g.end());
    g.erase(std::unique(g.begin(), g.end()), g.end());
    return g;
}

// Discrete engine. `level_of[i]` in 1..K, `values[l-1]` the reported treatment value of level l.
PotentialOutcomeFit fit_discrete(const Dataset& data, const EstimateOptions& opt, TreatmentKind kind,
                                 const std::vector<int>& level_of, const std::vector<double>& values,
                                 const PotentialOutcomeFit* warm) {
    const std::size_t n = data.n();
    const int K = static_cast<int>(values.size());
    const Eigen::VectorXd w = obs_weights(opt, n);
    PotentialOutcomeFit fit;
    fit.kind = kind;
    fit.basis = opt.basis;
    fit.y_grid = resolve_y_grid(data, opt);
    fit.extrapolation = Extrapolation::Step;
    opt.basis.validate(data);

    // Step 1: threshold probits of 1{level <= l} on B(z, x).
    Dataset lv = data;
    for (std::size_t i = 0; i < n; ++i) lv.d[i] = level_of[i];
    std::vector<double> tgrid;
    for (int l = 1; l < K; ++l) tgrid.push_back(l);
    DROptions dro;
    dro.flag_thin = opt.flag_thin;
    dro.probit = opt.probit;
    if (warm) dro.warm_start = &warm->first_stage;
    fit.first_stage = dr_fit(DRSide::Treatment, lv, opt.basis, tgrid, opt.weights, dro);
    if (fit.first_stage.flagged_count() > 0) throw SeparationError("first-stage probit failed at some threshold");
    const Eigen::MatrixXd BZ = opt.basis.design_zx(data);
    // idx(i, l) = Phi^-1 P(level <= l | z_i, x_i), l = 0..K, rearranged in l.
    Eigen::MatrixXd idx(static_cast<Eigen::Index>(n), K + 1);
    for (std::size_t i = 0; i < n; ++i) {
        const auto I = static_cast<Eigen::Index>(i);
        std::vector<double> t(static_cast<std::size_t>(K - 1));
        for (int l = 1; l < K; ++l) t[static_cast<std::size_t>(l - 1)] = BZ.row(I).dot(fit.first_stage.coef.row(l - 1));
        std::sort(t.begin(), t.end());
        idx(I, 0) = -kInf;
        for (int l = 1; l < K; ++l) idx(I, l) = t[static_cast<std::size_t>(l - 1)];
        idx(I, K) = kInf;
    }
    for (int l = 1; l <= K; ++l)
        for (std::size_t i = 0; i < n; ++i) {
            const auto I = static_cast<Eigen::Index>(i);
            if (level_of[i] == l && !(idx(I, l) - idx(I, l - 1) > 1e-12))
                throw NonConvergenceError("cell collapse: fitted probability of level d = " +
                                          std::to_string(values[static_cast<std::size_t>(l - 1)]) + " is zero");
        }

    set_rows(fit, data, w);
    const Eigen::MatrixXd BX = opt.basis.design_x(data);
    const Eigen::Index p = BX.cols();
    const bool compress = opt.basis.covariates.empty();
    const double total = w.sum();
    const std::size_t ny = fit.y_grid.size();

    fit.levels.resize(static_cast<std::size_t>(K));
    for (int l = 1; l <= K; ++l) {
        LevelFit& lf = fit.levels[static_cast<std::size_t>(l - 1)];
        lf.d = values[static_cast<std::size_t>(l - 1)];
        lf.beta = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ny), p);
        lf.gamma = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ny), p);
        lf.diag.assign(ny, {});
        lf.flagged.assign(ny, false);

        // Units: one per observation in the cell, or one per distinct cell (lo, hi) when
        // the basis is intercept-only.
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < n; ++i)
            if (level_of[i] == l) members.push_back(i);
        if (members.empty()) throw ConfigError("treatment level " + std::to_string(lf.d) + " has no observations");
        std::vector<CellUnit> proto;
        std::vector<std::size_t> unit_of(members.size());
        Eigen::MatrixXd Bu;
        if (compress) {
            std::map<std::pair<double, double>, std::size_t> key;
            for (std::size_t m = 0; m < members.size(); ++m) {
                const auto I = static_cast<Eigen::Index>(members[m]);
                const auto k = std::make_pair(idx(I, l - 1), idx(I, l));
                auto [pos, inserted] = key.emplace(k, proto.size());
                if (inserted) proto.push_back(CellUnit{0, k.first, k.second, 0.0, 0.0});
                unit_of[m] = pos->second;
            }
            Bu = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(proto.size()), 1);
            for (std::size_t u = 0; u < proto.size(); ++u) proto[u].row = static_cast<Eigen::Index>(u);
        } else {
            Bu.resize(static_cast<Eigen::Index>(members.size()), p);
            for (std::size_t m = 0; m < members.size(); ++m) {
                const auto I = static_cast<Eigen::Index>(members[m]);
                Bu.row(static_cast<Eigen::Index>(m)) = BX.row(I);
                proto.push_back(CellUnit{static_cast<Eigen::Index>(m), idx(I, l - 1), idx(I, l), 0.0, 0.0});
                unit_of[m] = m;
            }
        }

        const LevelFit* wl = nullptr;
        if (warm && warm->levels.size() == fit.levels.size()) {
            wl = &warm->levels[static_cast<std::size_t>(l - 1)];
            if (wl->beta.rows() != static_cast<Eigen::Index>(ny) || wl->beta.cols() != p) wl = nullptr;
        }

        parallel_for(ny, opt.threads, [&](std::size_t j) {
            const double y = fit.y_grid[j];
            std::vector<CellUnit> units = proto;
            for (std::size_t m = 0; m < members.size(); ++m) {
                const std::size_t i = members[m];
                const double wi = w(static_cast<Eigen::Index>(i));
                if (data.y[i] <= y)
                    units[unit_of[m]].w_le += wi;
                else
                    units[unit_of[m]].w_gt += wi;
            }
            GridDiagnostics& gd = lf.diag[j];
            Eigen::VectorXd theta(2 * p);
            try {
                if (wl) {
                    theta << wl->beta.row(static_cast<Eigen::Index>(j)).transpose(),
                        wl->gamma.row(static_cast<Eigen::Index>(j)).transpose();
                } else {
                    // Start: probit of 1{Y <= y} on B(x) within the cell, rho = 0.
                    const auto U = static_cast<Eigen::Index>(units.size());
                    Eigen::MatrixXd Xs(2 * U, p);
                    Eigen::VectorXd ys(2 * U), ws(2 * U);
                    for (Eigen::Index u = 0; u < U; ++u) {
                        const CellUnit& cu = units[static_cast<std::size_t>(u)];
                        Xs.row(u) = Bu.row(cu.row);
                        Xs.row(U + u) = Bu.row(cu.row);
                        ys(u) = 1.0;
                        ys(U + u) = 0.0;
                        ws(u) = cu.w_le;
                        ws(U + u) = cu.w_gt;
                    }
                    ProbitOptions po = opt.probit;
                    po.check_rank = false;
                    const ProbitResult pr = probit_fit(Xs, ys, ws, std::nullopt, po);
                    theta << pr.beta, Eigen::VectorXd::Zero(p);
                }
                Step2Result r = step2_newton(Bu, units, total, theta, opt.step2_grad_tol);
                gd = r.diag;
                lf.beta.row(static_cast<Eigen::Index>(j)) = r.theta.head(p).transpose();
                lf.gamma.row(static_cast<Eigen::Index>(j)) = r.theta.tail(p).transpose();
            } catch (const Error& e) {
                gd.converged = false;
                gd.flagged = true;
                gd.message = e.what();
            }
            lf.flagged[j] = gd.flagged;
        });
        if (lf.flagged_count() == ny)
            throw NonConvergenceError("step 2 failed at every grid point for d = " + std::to_string(lf.d));
        interpolate_flagged(fit.y_grid, lf.flagged, lf.beta);
        interpolate_flagged(fit.y_grid, lf.flagged, lf.gamma);
        if (lf.flagged_count() > 0)
            fit.warnings.push_back(std::to_string(lf.flagged_count()) + " flagged grid points for d = " +
                                   std::to_string(lf.d) + " (interpolated)");

        const Eigen::Index R = fit.x_rows.rows();
        lf.F_raw.resize(R, static_cast<Eigen::Index>(ny));
        lf.rho.resize(R, static_cast<Eigen::Index>(ny));
        for (Eigen::Index r = 0; r < R; ++r) {
            const Eigen::RowVectorXd bx = opt.basis.row_x(fit.x_rows.row(r));
            for (std::size_t j = 0; j < ny; ++j) {
                const auto J = static_cast<Eigen::Index>(j);
                lf.F_raw(r, J) = Phi(bx.dot(lf.beta.row(J)));
                lf.rho(r, J) = Corr::clamp(std::tanh(bx.dot(lf.gamma.row(J)))).value;
            }
        }
        lf.F = lf.F_raw;
        for (Eigen::Index r = 0; r < R; ++r) std::sort(lf.F.row(r).begin(), lf.F.row(r).end());
        lf.row_ok.assign(static_cast<std::size_t>(R), true);
    }
    std::sort(fit.levels.begin(), fit.levels.end(), [](const LevelFit& a, const LevelFit& b) { return a.d < b.d; });
    return fit;
}

}  // namespace

std::size_t LevelFit::flagged_count() const { return static_cast<std::size_t>(std::count(flagged.begin(), flagged.end(), true)); }
std::size_t LevelFit::weak_rows() const { return static_cast<std::size_t>(std::count(row_ok.begin(), row_ok.end(), false)); }

std::size_t PotentialOutcomeFit::level_index(double d) const {
    for (std::size_t l = 0; l < levels.size(); ++l)
        if (std::abs(levels[l].d - d) <= 1e-12 * (1.0 + std::abs(d))) return l;
    throw ConfigError("treatment value " + std::to_string(d) + " is not a fitted level");
}

const LevelFit& PotentialOutcomeFit::level(double d) const { return levels[level_index(d)]; }

double PotentialOutcomeFit::conditional_F(std::size_t l, std::size_t j, const Eigen::RowVectorXd& x) const {
    const LevelFit& lf = levels.at(l);
    const auto J = static_cast<Eigen::Index>(j);
    if (kind != TreatmentKind::Continuous) return Phi(basis.row_x(x).dot(lf.beta.row(J)));
    const DRFit& out = *outcome_stage;
    const Eigen::Index k = static_cast<Eigen::Index>(
        std::find(first_stage.grid.begin(), first_stage.grid.end(), lf.d) - first_stage.grid.begin());
    const double s0 = basis.row_dzx(lf.d, 0.0, x).dot(out.coef.row(J));
    const double s1 = basis.row_dzx(lf.d, 1.0, x).dot(out.coef.row(J));
    const double t0 = basis.row_zx(0.0, x).dot(first_stage.coef.row(k));
    const double t1 = basis.row_zx(1.0, x).dot(first_stage.coef.row(k));
    return solve_continuous_index(s0, s1, t0, t1, 0.0).F;
}

double PotentialOutcomeFit::conditional_rho(std::size_t l, std::size_t j, const Eigen::RowVectorXd& x) const {
    const LevelFit& lf = levels.at(l);
    const auto J = static_cast<Eigen::Index>(j);
    if (kind != TreatmentKind::Continuous) return Corr::clamp(std::tanh(basis.row_x(x).dot(lf.gamma.row(J)))).value;
    const DRFit& out = *outcome_stage;
    const Eigen::Index k = static_cast<Eigen::Index>(
        std::find(first_stage.grid.begin(), first_stage.grid.end(), lf.d) - first_stage.grid.begin());
    const double s0 = basis.row_dzx(lf.d, 0.0, x).dot(out.coef.row(J));
    const double s1 = basis.row_dzx(lf.d, 1.0, x).dot(out.coef.row(J));
    const double t0 = basis.row_zx(0.0, x).dot(first_stage.coef.row(k));
    const double t1 = basis.row_zx(1.0, x).dot(first_stage.coef.row(k));
    return solve_continuous_index(s0, s1, t0, t1, 0.0).rho;
}

CellLikelihood cell_loglik(const Eigen::MatrixXd& B, const std::vector<CellUnit>& units, double total,
                           const Eigen::VectorXd& theta, bool derivatives) {
    const Eigen::Index p = B.cols();
    CellLikelihood out;
    if (derivatives) {
        out.grad = Eigen::VectorXd::Zero(2 * p);
        out.hess = Eigen::MatrixXd::Zero(2 * p, 2 * p);
    }
    const auto b = theta.head(p);
    const auto g = theta.tail(p);
    double ll = 0.0;
    for (const CellUnit& u : units) {
        if (u.w_le == 0.0 && u.w_gt == 0.0) continue;
        const auto row = B.row(u.row);
        const double m = row.dot(b);
        const double r = std::clamp(std::tanh(row.dot(g)), -1.0 + kCorrEps, 1.0 - kCorrEps);
        const Phi2Parts hi = phi2_parts(m, u.hi, r), lo = phi2_parts(m, u.lo, r);
        const double P = hi.v - lo.v;
        const double Q = upper_mass(m, u.lo, u.hi, r);
        if ((u.w_le > 0.0 && !(P > 0.0)) || (u.w_gt > 0.0 && !(Q > 0.0))) {
            out.value = -kInf;
            return out;
        }
        ll += (u.w_le > 0.0 ? u.w_le * std::log(P) : 0.0) + (u.w_gt > 0.0 ? u.w_gt * std::log(Q) : 0.0);
        if (!derivatives) continue;
        const double J = (1.0 - r) * (1.0 + r);
        const double Pm = hi.dx - lo.dx, Pr = hi.dr - lo.dr;
        const double Pmm = hi.dxx - lo.dxx, Pmr = hi.dxr - lo.dxr, Prr = hi.drr - lo.drr;
        const double Pu = Pr * J, Pmu = Pmr * J, Puu = Prr * J * J - 2.0 * r * J * Pr;
        const double c1 = (u.w_le > 0.0 ? u.w_le / P : 0.0) - (u.w_gt > 0.0 ? u.w_gt / Q : 0.0);
        const double c2 = -((u.w_le > 0.0 ? u.w_le / (P * P) : 0.0) + (u.w_gt > 0.0 ? u.w_gt / (Q * Q) : 0.0));
        const double gm = c1 * Pm, gu = c1 * Pu;
        const double hmm = c1 * Pmm + c2 * Pm * Pm, hmu = c1 * Pmu + c2 * Pm * Pu, huu = c1 * Puu + c2 * Pu * Pu;
        out.grad.head(p) += gm * row.transpose();
        out.grad.tail(p) += gu * row.transpose();
        const Eigen::MatrixXd rr = row.transpose() * row;
        out.hess.topLeftCorner(p, p) += hmm * rr;
        out.hess.topRightCorner(p, p) += hmu * rr;
        out.hess.bottomRightCorner(p, p) += huu * rr;
    }
    out.value = ll / total;
    if (derivatives) {
        out.grad /= total;
        out.hess.bottomLeftCorner(p, p) = out.hess.topRightCorner(p, p).transpose();
        out.hess /= total;
    }
    return out;
}

PotentialOutcomeFit fit_binary(const Dataset& data, const EstimateOptions& opt, const PotentialOutcomeFit* warm) {
    data.validate();
    check_binary_instrument(data);
    std::vector<int> level_of(data.n());
    for (std::size_t i = 0; i < data.n(); ++i) {
        if (data.d[i] == 1.0)
            level_of[i] = 1;
        else if (data.d[i] == 0.0)
            level_of[i] = 2;
        else
            throw ConfigError("binary treatment must be coded 0/1; found " + std::to_string(data.d[i]));
    }
    return fit_discrete(data, opt, TreatmentKind::Binary, level_of, {1.0, 0.0}, warm);
}

PotentialOutcomeFit fit_ordered(const Dataset& data, const EstimateOptions& opt, const PotentialOutcomeFit* warm) {
    data.validate();
    check_binary_instrument(data);
    const std::vector<double> lv = support(data.d);
    if (lv.size() < 2) throw ConfigError("ordered treatment needs at least two levels");
    if (lv.size() > 50) throw ConfigError("ordered treatment has more than 50 levels; use the continuous kind");
    std::vector<int> level_of(data.n());
    for (std::size_t i = 0; i < data.n(); ++i)
        level_of[i] = static_cast<int>(std::lower_bound(lv.begin(), lv.end(), data.d[i]) - lv.begin()) + 1;
    return fit_discrete(data, opt, TreatmentKind::Ordered, level_of, lv, warm);
}

PotentialOutcomeFit fit_continuous(const Dataset& data, const EstimateOptions& opt, const PotentialOutcomeFit* warm) {
    data.validate();
    check_binary_instrument(data);
    opt.basis.validate(data);
    const std::size_t n = data.n();
    const Eigen::VectorXd w = obs_weights(opt, n);
    PotentialOutcomeFit fit;
    fit.kind = TreatmentKind::Continuous;
    fit.basis = opt.basis;
    fit.y_grid = resolve_y_grid(data, opt);
    fit.extrapolation = Extrapolation::Linear;
    std::vector<double> dg = opt.d_grid.empty() ? default_grid(data.d) : opt.d_grid;
    std::sort(dg.begin(), dg.end());
    dg.erase(std::unique(dg.begin(), dg.end()), dg.end());

    DROptions dro;
    dro.flag_thin = opt.flag_thin;
    dro.probit = opt.probit;
    if (warm && warm->outcome_stage) dro.warm_start = &*warm->outcome_stage;
    fit.outcome_stage = dr_fit(DRSide::Outcome, data, opt.basis, fit.y_grid, opt.weights, dro);
    dro.warm_start = warm ? &warm->first_stage : nullptr;
    fit.first_stage = dr_fit(DRSide::Treatment, data, opt.basis, dg, opt.weights, dro);
    set_rows(fit, data, w);

    const DRFit& os = *fit.outcome_stage;
    const DRFit& ts = fit.first_stage;
    const std::size_t ny = fit.y_grid.size(), nd = dg.size();
    const Eigen::Index R = fit.x_rows.rows();
    fit.levels.resize(nd);
    for (std::size_t k = 0; k < nd; ++k) {
        LevelFit& lf = fit.levels[k];
        lf.d = dg[k];
        lf.diag = os.diagnostics;
        lf.flagged.resize(ny);
        for (std::size_t j = 0; j < ny; ++j) lf.flagged[j] = os.diagnostics[j].flagged;
        lf.F_raw = Eigen::MatrixXd::Zero(R, static_cast<Eigen::Index>(ny));
        lf.rho = lf.F_raw;
        lf.a = lf.F_raw;
        lf.b = lf.F_raw;
        lf.row_ok.assign(static_cast<std::size_t>(R), true);
    }
    parallel_for(static_cast<std::size_t>(R), opt.threads, [&](std::size_t rr) {
        const auto r = static_cast<Eigen::Index>(rr);
        const Eigen::RowVectorXd x = fit.x_rows.row(r);
        // Treatment-side indices, rearranged in d.
        std::vector<double> t[2];
        for (int z = 0; z < 2; ++z) {
            const Eigen::RowVectorXd bz = opt.basis.row_zx(z, x);
            for (std::size_t k = 0; k < nd; ++k) t[z].push_back(bz.dot(ts.coef.row(static_cast<Eigen::Index>(k))));
            std::sort(t[z].begin(), t[z].end());
        }
        for (std::size_t k = 0; k < nd; ++k) {
            LevelFit& lf = fit.levels[k];
            const double t0 = t[0][k], t1 = t[1][k];
            if (std::abs(t1 - t0) < opt.weak_contrast) {
                lf.row_ok[rr] = false;
                continue;
            }
            // Outcome-side indices, rearranged in y.
            std::vector<double> s[2];
            for (int z = 0; z < 2; ++z) {
                const Eigen::RowVectorXd bd = opt.basis.row_dzx(lf.d, z, x);
                for (std::size_t j = 0; j < ny; ++j) s[z].push_back(bd.dot(os.coef.row(static_cast<Eigen::Index>(j))));
                std::sort(s[z].begin(), s[z].end());
            }
            for (std::size_t j = 0; j < ny; ++j) {
                const auto J = static_cast<Eigen::Index>(j);
                const ContinuousSolution c = solve_continuous_index(s[0][j], s[1][j], t0, t1, 0.0);
                lf.F_raw(r, J) = c.F;
                lf.rho(r, J) = Corr::clamp(c.rho).value;
                lf.a(r, J) = c.a;
                lf.b(r, J) = c.b;
            }
        }
    });
    for (LevelFit& lf : fit.levels) {
        lf.F = lf.F_raw;
        for (Eigen::Index r = 0; r < R; ++r) std::sort(lf.F.row(r).begin(), lf.F.row(r).end());
        if (lf.weak_rows() == static_cast<std::size_t>(R))
            throw WeakInstrumentError("first-stage contrast below " + std::to_string(opt.weak_contrast) +
                                      " at every covariate row for d = " + std::to_string(lf.d));
        if (lf.weak_rows() > 0)
            fit.warnings.push_back(std::to_string(lf.weak_rows()) + " covariate rows excluded at d = " +
                                   std::to_string(lf.d) + " (weak first-stage contrast)");
    }
    if (os.flagged_count() > 0)
        fit.warnings.push_back(std::to_string(os.flagged_count()) + " flagged outcome grid points (interpolated)");
    return fit;
}

PotentialOutcomeFit fit(TreatmentKind kind, const Dataset& data, const EstimateOptions& opt,
                        const PotentialOutcomeFit* warm) {
    switch (kind) {
        case TreatmentKind::Binary: return fit_binary(data, opt, warm);
        case TreatmentKind::Ordered: return fit_ordered(data, opt, warm);
        case TreatmentKind::Continuous: return fit_continuous(data, opt, warm);
    }
    throw ConfigError("unknown treatment kind");
}

PotentialOutcomeFit fit_exogenous_dr(const Dataset& data, TreatmentKind kind, const EstimateOptions& opt) {
    data.validate();
    const std::size_t n = data.n();
    const Eigen::VectorXd w = obs_weights(opt, n);
    PotentialOutcomeFit fit;
    fit.kind = kind;
    fit.basis = opt.basis;
    fit.basis.z_mode = ZMode::None;
    fit.y_grid = resolve_y_grid(data, opt);
    fit.extrapolation = kind == TreatmentKind::Continuous ? Extrapolation::Linear : Extrapolation::Step;
    DROptions dro;
    dro.flag_thin = opt.flag_thin;
    dro.probit = opt.probit;
    fit.outcome_stage = dr_fit(DRSide::Outcome, data, fit.basis, fit.y_grid, opt.weights, dro);
    set_rows(fit, data, w);
    std::vector<double> dv = kind == TreatmentKind::Continuous
                                 ? (opt.d_grid.empty() ? default_grid(data.d) : opt.d_grid)
                                 : support(data.d);
    std::sort(dv.begin(), dv.end());
    const std::size_t ny = fit.y_grid.size();
    const Eigen::Index R = fit.x_rows.rows();
    for (double d : dv) {
        LevelFit lf;
        lf.d = d;
        lf.diag = fit.outcome_stage->diagnostics;
        lf.flagged.resize(ny);
        for (std::size_t j = 0; j < ny; ++j) lf.flagged[j] = lf.diag[j].flagged;
        lf.F_raw.resize(R, static_cast<Eigen::Index>(ny));
        lf.rho = Eigen::MatrixXd::Zero(R, static_cast<Eigen::Index>(ny));
        for (Eigen::Index r = 0; r < R; ++r) {
            const Eigen::RowVectorXd bd = fit.basis.row_dx(d, fit.x_rows.row(r));
            for (std::size_t j = 0; j < ny; ++j)
                lf.F_raw(r, static_cast<Eigen::Index>(j)) = Phi(bd.dot(fit.outcome_stage->coef.row(static_cast<Eigen::Index>(j))));
        }
        lf.F = lf.F_raw;
        for (Eigen::Index r = 0; r < R; ++r) std::sort(lf.F.row(r).begin(), lf.F.row(r).end());
        lf.row_ok.assign(static_cast<std::size_t>(R), true);
        fit.levels.push_back(std::move(lf));
    }
    return fit;
}

TslsResult fit_2sls(const Dataset& data) {
    data.validate();
    const auto n = static_cast<Eigen::Index>(data.n());
    const Eigen::Index k = 2 + data.x.cols();
    if (n <= k) throw ConfigError("2SLS needs more observations than regressors");
    Eigen::MatrixXd X(n, k), Zm(n, k);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto I = static_cast<std::size_t>(i);
        X(i, 0) = Zm(i, 0) = 1.0;
        X(i, 1) = data.d[I];
        Zm(i, 1) = data.z[I];
        for (Eigen::Index c = 0; c < data.x.cols(); ++c) X(i, 2 + c) = Zm(i, 2 + c) = data.x(i, c);
        y(i) = data.y[I];
    }
    const Eigen::MatrixXd ZX = Zm.transpose() * X;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(ZX);
    if (lu.rank() < k) throw RankDeficientError("singular instrument moment matrix Z'X");
    TslsResult out;
    out.beta = lu.solve(Zm.transpose() * y);
    out.coef = out.beta(1);
    const Eigen::VectorXd e = y - X * out.beta;
    const Eigen::MatrixXd A = lu.inverse();  // (Z'X)^-1
    const double dof = static_cast<double>(n - k);
    const double s2 = e.squaredNorm() / dof;
    const Eigen::MatrixXd V0 = s2 * A * (Zm.transpose() * Zm) * A.transpose();
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
    for (Eigen::Index i = 0; i < n; ++i) meat += e(i) * e(i) * Zm.row(i).transpose() * Zm.row(i);
    const Eigen::MatrixXd V1 = A * meat * A.transpose() * (static_cast<double>(n) / dof);
    out.se_homoskedastic = std::sqrt(V0(1, 1));
    out.se = std::sqrt(V1(1, 1));
    // First stage: D on (1, Z, X); F = t^2 of the instrument.
    Eigen::VectorXd dv = X.col(1);
    const Eigen::MatrixXd ZZ = Zm.transpose() * Zm;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(ZZ);
    const Eigen::VectorXd pi = ldlt.solve(Zm.transpose() * dv);
    const Eigen::VectorXd v = dv - Zm * pi;
    const double sv = v.squaredNorm() / dof;
    const Eigen::MatrixXd ZZi = ldlt.solve(Eigen::MatrixXd::Identity(k, k));
    const double var = sv * ZZi(1, 1);
    out.first_stage_F = var > 0.0 ? pi(1) * pi(1) / var : std::numeric_limits<double>::infinity();
    out.weak = out.first_stage_F < 10.0;
    return out;
}

}  // namespace copiv
