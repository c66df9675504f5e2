#include "copiv/dr.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "copiv/errors.hpp"
#include "copiv/gauss.hpp"

namespace copiv {

// ---------------------------------------------------------------- basis

Eigen::Index BasisSpec::dim_x() const {
    return (intercept ? 1 : 0) + static_cast<Eigen::Index>(covariates.size()) * std::max(degree, 1);
}

Eigen::Index BasisSpec::dim_zx() const {
    switch (z_mode) {
        case ZMode::None: return dim_x();
        case ZMode::Additive: return dim_x() + 1;
        case ZMode::Saturated: return 2 * dim_x();
    }
    return 0;
}

Eigen::Index BasisSpec::dim_dx() const { return dim_x() + (interact_d_x ? dim_x() : 1); }

Eigen::Index BasisSpec::dim_dzx() const {
    switch (z_mode) {
        case ZMode::None: return dim_dx();
        case ZMode::Additive: return dim_dx() + 1;
        case ZMode::Saturated: return 2 * dim_dx();
    }
    return 0;
}

Eigen::RowVectorXd BasisSpec::row_x(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    Eigen::RowVectorXd r(dim_x());
    Eigen::Index k = 0;
    if (intercept) r(k++) = 1.0;
    for (std::size_t c : covariates) {
        const double v = x(static_cast<Eigen::Index>(c));
        double p = v;
        for (int g = 1; g <= std::max(degree, 1); ++g) {
            r(k++) = p;
            p *= v;
        }
    }
    return r;
}

namespace {

Eigen::RowVectorXd with_z(const Eigen::RowVectorXd& base, double z, ZMode mode) {
    if (mode == ZMode::None) return base;
    if (mode == ZMode::Additive) {
        Eigen::RowVectorXd r(base.size() + 1);
        r << base, z;
        return r;
    }
    Eigen::RowVectorXd r(2 * base.size());
    r << base, z * base;
    return r;
}

std::vector<std::string> names_with_z(const std::vector<std::string>& base, ZMode mode) {
    std::vector<std::string> out = base;
    if (mode == ZMode::Additive) out.push_back("z");
    if (mode == ZMode::Saturated)
        for (const auto& b : base) out.push_back("z*" + b);
    return out;
}

template <class RowFn>
Eigen::MatrixXd build(const Dataset& data, Eigen::Index p, RowFn fn) {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(data.n()), p);
    Eigen::RowVectorXd empty(0);
    for (std::size_t i = 0; i < data.n(); ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        if (data.x.cols() > 0)
            X.row(ii) = fn(i, Eigen::RowVectorXd(data.x.row(ii)));
        else
            X.row(ii) = fn(i, empty);
    }
    return X;
}

}  // namespace

Eigen::RowVectorXd BasisSpec::row_zx(double z, const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    return with_z(row_x(x), z, z_mode);
}

Eigen::RowVectorXd BasisSpec::row_dx(double d, const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    const Eigen::RowVectorXd bx = row_x(x);
    Eigen::RowVectorXd r(dim_dx());
    if (interact_d_x)
        r << bx, d * bx;
    else
        r << bx, d;
    return r;
}

Eigen::RowVectorXd BasisSpec::row_dzx(double d, double z, const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    return with_z(row_dx(d, x), z, z_mode);
}

Eigen::MatrixXd BasisSpec::design_x(const Dataset& data) const {
    return build(data, dim_x(), [&](std::size_t, const Eigen::RowVectorXd& x) { return row_x(x); });
}

Eigen::MatrixXd BasisSpec::design_zx(const Dataset& data) const {
    return build(data, dim_zx(), [&](std::size_t i, const Eigen::RowVectorXd& x) { return row_zx(data.z[i], x); });
}

Eigen::MatrixXd BasisSpec::design_dx(const Dataset& data) const {
    return build(data, dim_dx(), [&](std::size_t i, const Eigen::RowVectorXd& x) { return row_dx(data.d[i], x); });
}

Eigen::MatrixXd BasisSpec::design_dzx(const Dataset& data) const {
    return build(data, dim_dzx(),
                 [&](std::size_t i, const Eigen::RowVectorXd& x) { return row_dzx(data.d[i], data.z[i], x); });
}

std::vector<std::string> BasisSpec::names_x() const {
    std::vector<std::string> out;
    if (intercept) out.push_back("1");
    for (std::size_t c : covariates)
        for (int g = 1; g <= std::max(degree, 1); ++g)
            out.push_back("x" + std::to_string(c + 1) + (g > 1 ? "^" + std::to_string(g) : ""));
    return out;
}

std::vector<std::string> BasisSpec::names_zx() const { return names_with_z(names_x(), z_mode); }

std::vector<std::string> BasisSpec::names_dx() const {
    auto out = names_x();
    if (interact_d_x)
        for (const auto& b : names_x()) out.push_back("d*" + b);
    else
        out.push_back("d");
    return out;
}

std::vector<std::string> BasisSpec::names_dzx() const { return names_with_z(names_dx(), z_mode); }

void BasisSpec::validate(const Dataset& data) const {
    for (std::size_t c : covariates)
        if (c >= data.k()) throw ConfigError("basis refers to covariate column " + std::to_string(c + 1) +
                                             " but the dataset has " + std::to_string(data.k()));
    if (degree < 1) throw ConfigError("basis degree must be >= 1");
    if (dim_x() == 0) throw ConfigError("empty basis");
}

// ---------------------------------------------------------------- probit

void check_full_rank(const Eigen::MatrixXd& X, const std::vector<std::string>& names) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < X.cols()) {
        std::ostringstream os;
        os << "design has rank " << qr.rank() << " < " << X.cols() << " columns; dependent columns:";
        const auto perm = qr.colsPermutation().indices();
        for (Eigen::Index j = qr.rank(); j < X.cols(); ++j) {
            const auto c = static_cast<std::size_t>(perm(j));
            os << ' ' << (c < names.size() ? names[c] : "#" + std::to_string(c));
        }
        throw RankDeficientError(os.str());
    }
}

namespace {

struct ProbitEval {
    double ll = 0.0;
    Eigen::VectorXd grad;
    Eigen::MatrixXd negH;
};

double probit_ll(const Eigen::VectorXd& eta, const Eigen::VectorXd& y, const Eigen::VectorXd& w, double wsum) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        if (w(i) == 0.0) continue;
        ll += w(i) * (y(i) > 0.5 ? log_Phi(eta(i)) : log_Phi(-eta(i)));
    }
    return ll / wsum;
}

ProbitEval probit_eval(const Eigen::MatrixXd& X, const Eigen::VectorXd& eta, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& w, double wsum) {
    const Eigen::Index n = X.rows();
    Eigen::VectorXd g(n), h(n);
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double e = eta(i);
        if (y(i) > 0.5) {
            const double l = mills(e);
            ll += w(i) * log_Phi(e);
            g(i) = w(i) * l;
            h(i) = w(i) * l * (e + l);
        } else {
            const double l = mills(-e);
            ll += w(i) * log_Phi(-e);
            g(i) = -w(i) * l;
            h(i) = w(i) * l * (l - e);
        }
    }
    ProbitEval out;
    out.ll = ll / wsum;
    out.grad = X.transpose() * g / wsum;
    out.negH = X.transpose() * (X.array().colwise() * h.array()).matrix() / wsum;
    return out;
}

}  // namespace

ProbitResult probit_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& weights,
                        const std::optional<Eigen::VectorXd>& start, const ProbitOptions& opt,
                        const std::vector<std::string>& names) {
    const Eigen::Index n = X.rows(), p = X.cols();
    if (y.size() != n) throw DomainError("probit response length differs from design rows");
    const Eigen::VectorXd w = weights.size() == 0 ? Eigen::VectorXd::Ones(n) : weights;
    if (w.size() != n || (w.array() < 0.0).any()) throw DomainError("probit weights must be non-negative, one per row");
    const double wsum = w.sum();
    if (!(wsum > 0.0)) throw DomainError("probit weights sum to zero");

    double w1 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) w1 += w(i) * (y(i) > 0.5 ? 1.0 : 0.0);
    if (w1 <= 0.0 || w1 >= wsum) throw SeparationError("response is constant; all columns separate the data");

    if (opt.check_rank) check_full_rank(X, names);

    ProbitResult res;
    res.beta = start && start->size() == p ? *start : Eigen::VectorXd::Zero(p);
    Eigen::VectorXd eta = X * res.beta;
    ProbitEval ev = probit_eval(X, eta, y, w, wsum);
    if (!std::isfinite(ev.ll)) {
        res.beta.setZero();
        eta.setZero();
        ev = probit_eval(X, eta, y, w, wsum);
    }
    Eigen::VectorXd last_step = Eigen::VectorXd::Zero(p);
    for (int it = 0; it < opt.max_iter; ++it) {
        res.iterations = it;
        res.grad_norm = ev.grad.lpNorm<Eigen::Infinity>();
        if (res.grad_norm <= opt.grad_tol) {
            res.converged = true;
            break;
        }
        Eigen::LDLT<Eigen::MatrixXd> ldlt(ev.negH);
        Eigen::VectorXd step = ldlt.solve(ev.grad);
        if (ldlt.info() != Eigen::Success || !step.allFinite()) step = ev.grad;
        double t = 1.0;
        bool accepted = false;
        for (int h = 0; h <= opt.max_halvings; ++h, t *= 0.5) {
            const Eigen::VectorXd cand = res.beta + t * step;
            const Eigen::VectorXd ceta = X * cand;
            const double ll = probit_ll(ceta, y, w, wsum);
            // Allow for rounding in the n-term sum near the optimum.
            if (std::isfinite(ll) && ll >= ev.ll - 1e-12 * std::max(1.0, std::abs(ev.ll))) {
                last_step = t * step;
                res.beta = cand;
                eta = ceta;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            res.message = "step-halving exhausted";
            break;
        }
        ev = probit_eval(X, eta, y, w, wsum);
        res.iterations = it + 1;
    }
    res.grad_norm = ev.grad.lpNorm<Eigen::Infinity>();
    if (!res.converged && res.grad_norm <= opt.grad_tol) res.converged = true;
    res.loglik = ev.ll;

    // Separation: large indices while Newton steps are not shrinking.
    const double max_eta = eta.cwiseAbs().maxCoeff();
    const double step_norm = last_step.lpNorm<Eigen::Infinity>();
    if (max_eta > opt.separation_index && step_norm > 0.05) {
        std::ostringstream os;
        os << "index reaches " << max_eta << " with coefficients still moving; columns:";
        for (Eigen::Index j = 0; j < p; ++j)
            if (std::abs(last_step(j)) > 0.1 * step_norm) {
                const auto c = static_cast<std::size_t>(j);
                os << ' ' << (c < names.size() ? names[c] : "#" + std::to_string(c));
            }
        throw SeparationError(os.str());
    }
    if (!res.converged && res.message.empty()) res.message = "iteration limit reached";
    return res;
}

// ---------------------------------------------------------------- distribution regression

std::size_t DRFit::flagged_count() const {
    return static_cast<std::size_t>(
        std::count_if(diagnostics.begin(), diagnostics.end(), [](const GridDiagnostics& g) { return g.flagged; }));
}

DRFit dr_fit(DRSide side, const Dataset& data, const BasisSpec& basis, const std::vector<double>& grid,
             const Eigen::VectorXd& weights, const DROptions& opt) {
    basis.validate(data);
    if (grid.empty()) throw ConfigError("empty threshold grid");
    const Eigen::MatrixXd X = side == DRSide::Outcome ? basis.design_dzx(data) : basis.design_zx(data);
    const auto names = side == DRSide::Outcome ? basis.names_dzx() : basis.names_zx();
    const std::vector<double>& v = side == DRSide::Outcome ? data.y : data.d;
    const std::size_t n = data.n();
    const std::size_t min_side = std::max<std::size_t>(10, (n + 99) / 100);
    check_full_rank(X, names);

    DRFit fit;
    fit.side = side;
    fit.basis = basis;
    fit.grid = grid;
    fit.coef = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(grid.size()), X.cols());
    fit.diagnostics.resize(grid.size());

    std::vector<bool> thin(grid.size(), false);
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const std::size_t below = static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [&](double a) {
            return a <= grid[g];
        }));
        thin[g] = below < min_side || n - below < min_side;
        if (thin[g] && !opt.flag_thin)
            throw DomainError("threshold " + std::to_string(grid[g]) + " leaves fewer than " +
                              std::to_string(min_side) + " observations on one side");
    }

    std::vector<std::size_t> order(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g) order[g] = opt.reverse_sweep ? grid.size() - 1 - g : g;

    std::optional<Eigen::VectorXd> start;
    Eigen::VectorXd resp(static_cast<Eigen::Index>(n));
    for (std::size_t g : order) {
        for (std::size_t i = 0; i < n; ++i) resp(static_cast<Eigen::Index>(i)) = v[i] <= grid[g] ? 1.0 : 0.0;
        if (opt.warm_start && opt.warm_start->coef.rows() == fit.coef.rows() &&
            opt.warm_start->coef.cols() == fit.coef.cols())
            start = Eigen::VectorXd(opt.warm_start->coef.row(static_cast<Eigen::Index>(g)).transpose());
        GridDiagnostics& diag = fit.diagnostics[g];
        if (thin[g]) {
            diag.converged = false;
            diag.flagged = true;
            diag.message = "too few observations on one side";
            continue;
        }
        try {
            ProbitOptions po = opt.probit;
            po.check_rank = false;
            ProbitResult r = probit_fit(X, resp, weights, start, po, names);
            fit.coef.row(static_cast<Eigen::Index>(g)) = r.beta.transpose();
            diag.converged = r.converged;
            diag.iterations = r.iterations;
            diag.grad_norm = r.grad_norm;
            diag.message = r.message;
            diag.flagged = !r.converged;
            if (r.converged) start = r.beta;
        } catch (const SeparationError& e) {
            diag.converged = false;
            diag.flagged = true;
            diag.message = e.what();
        }
    }

    // Flagged points take coefficients interpolated from unflagged neighbours.
    std::vector<std::size_t> good;
    for (std::size_t g = 0; g < grid.size(); ++g)
        if (!fit.diagnostics[g].flagged) good.push_back(g);
    if (good.empty()) throw NonConvergenceError("distribution regression failed at every grid point");
    for (std::size_t g = 0; g < grid.size(); ++g) {
        if (!fit.diagnostics[g].flagged) continue;
        auto it = std::lower_bound(good.begin(), good.end(), g);
        const auto G = static_cast<Eigen::Index>(g);
        if (it == good.begin()) {
            fit.coef.row(G) = fit.coef.row(static_cast<Eigen::Index>(*it));
        } else if (it == good.end()) {
            fit.coef.row(G) = fit.coef.row(static_cast<Eigen::Index>(good.back()));
        } else {
            const std::size_t hi = *it, lo = *(it - 1);
            const double t = (grid[g] - grid[lo]) / (grid[hi] - grid[lo]);
            fit.coef.row(G) = (1.0 - t) * fit.coef.row(static_cast<Eigen::Index>(lo)) +
                              t * fit.coef.row(static_cast<Eigen::Index>(hi));
        }
    }
    return fit;
}

std::vector<double> rearrange(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    return values;
}

std::vector<double> default_grid(const std::vector<double>& values, std::size_t count, double lo, double hi) {
    auto q = empirical_quantiles(values, prob_grid(count, lo, hi));
    q.erase(std::unique(q.begin(), q.end()), q.end());
    return q;
}

}  // namespace copiv
