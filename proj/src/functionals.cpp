#include "copiv/functionals.hpp"

#include <algorithm>
#include <cmath>

#include "copiv/copulas.hpp"
#include "copiv/errors.hpp"

namespace copiv {

std::size_t MarginalCDF::level_index(double d) const {
    for (std::size_t l = 0; l < levels.size(); ++l)
        if (std::abs(levels[l] - d) <= 1e-12 * (1.0 + std::abs(d))) return l;
    throw ConfigError("treatment value " + std::to_string(d) + " is not a fitted level");
}

std::vector<double> MarginalCDF::curve(double d) const {
    const auto l = static_cast<Eigen::Index>(level_index(d));
    return std::vector<double>(F.row(l).begin(), F.row(l).end());
}

double MarginalCDF::value(double d, double y) const {
    const auto l = static_cast<Eigen::Index>(level_index(d));
    const std::size_t m = grid.size();
    auto at = [&](std::size_t j) { return F(l, static_cast<Eigen::Index>(j)); };
    const std::size_t up = static_cast<std::size_t>(std::upper_bound(grid.begin(), grid.end(), y) - grid.begin());
    if (rule == Extrapolation::Step) return up == 0 ? 0.0 : at(up - 1);
    if (m == 1) return at(0);
    std::size_t j = up == 0 ? 0 : std::min(up - 1, m - 2);
    const double t = (y - grid[j]) / (grid[j + 1] - grid[j]);
    return std::clamp(at(j) + t * (at(j + 1) - at(j)), 0.0, 1.0);
}

MarginalCDF make_marginal(std::vector<double> grid, std::vector<double> levels, const Eigen::MatrixXd& F,
                          Extrapolation rule) {
    if (F.rows() != static_cast<Eigen::Index>(levels.size()) || F.cols() != static_cast<Eigen::Index>(grid.size()))
        throw DomainError("marginal CDF table has the wrong shape");
    if (!std::is_sorted(grid.begin(), grid.end())) throw DomainError("grid must be sorted");
    MarginalCDF out;
    out.grid = std::move(grid);
    out.levels = std::move(levels);
    out.F = F;
    out.rule = rule;
    for (Eigen::Index l = 0; l < out.F.rows(); ++l) std::sort(out.F.row(l).begin(), out.F.row(l).end());
    return out;
}

MarginalCDF marginalize(const PotentialOutcomeFit& fit) {
    const std::size_t ny = fit.y_grid.size();
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(fit.levels.size()), static_cast<Eigen::Index>(ny));
    std::vector<double> levels;
    for (std::size_t l = 0; l < fit.levels.size(); ++l) {
        const LevelFit& lf = fit.levels[l];
        if (lf.flagged_count() == ny) throw NonConvergenceError("all grid points flagged for d = " + std::to_string(lf.d));
        double wsum = 0.0;
        for (Eigen::Index r = 0; r < lf.F.rows(); ++r) {
            if (!lf.row_ok.empty() && !lf.row_ok[static_cast<std::size_t>(r)]) continue;
            const double w = fit.row_weights(r);
            F.row(static_cast<Eigen::Index>(l)) += w * lf.F.row(r);
            wsum += w;
        }
        if (!(wsum > 0.0)) throw WeakInstrumentError("no usable covariate rows for d = " + std::to_string(lf.d));
        F.row(static_cast<Eigen::Index>(l)) /= wsum;
        levels.push_back(lf.d);
    }
    return make_marginal(fit.y_grid, levels, F, fit.extrapolation);
}

double qsf(const MarginalCDF& F, double d, double tau, bool interpolate) {
    if (!(tau > 0.0 && tau < 1.0)) throw DomainError("tau must lie in (0,1)");
    const auto l = static_cast<Eigen::Index>(F.level_index(d));
    const auto m = F.F.cols();
    Eigen::Index j = 0;
    while (j < m && F.F(l, j) < tau) ++j;
    if (j == m)
        throw BoundaryError("tau = " + std::to_string(tau) + " exceeds F(y_max) = " + std::to_string(F.F(l, m - 1)) +
                            " at d = " + std::to_string(d));
    const auto J = static_cast<std::size_t>(j);
    if (!interpolate || j == 0) return F.grid[J];
    const double f0 = F.F(l, j - 1), f1 = F.F(l, j);
    if (!(f1 > f0)) return F.grid[J];
    return F.grid[J - 1] + (tau - f0) / (f1 - f0) * (F.grid[J] - F.grid[J - 1]);
}

double qte(const MarginalCDF& F, double tau, double d, double d2, bool interpolate) {
    if (d == d2) throw DomainError("qte needs two distinct treatment values");
    return (qsf(F, d, tau, interpolate) - qsf(F, d2, tau, interpolate)) / (d - d2);
}

AsfValue asf_detail(const MarginalCDF& F, double d) {
    const auto l = static_cast<Eigen::Index>(F.level_index(d));
    const std::size_t m = F.grid.size();
    AsfValue out;
    out.value = F.grid.front();
    for (std::size_t j = 0; j + 1 < m; ++j)
        out.value += (1.0 - F.F(l, static_cast<Eigen::Index>(j))) * (F.grid[j + 1] - F.grid[j]);
    const double range = F.grid.back() - F.grid.front();
    out.truncation_bound = (F.F(l, 0) + 1.0 - F.F(l, static_cast<Eigen::Index>(m - 1))) * range;
    return out;
}

double asf(const MarginalCDF& F, double d) { return asf_detail(F, d).value; }

double ate(const MarginalCDF& F, double d, double d2) {
    if (d == d2) throw DomainError("ate needs two distinct treatment values");
    return (asf(F, d) - asf(F, d2)) / (d - d2);
}

CounterfactualCDF treated_counterfactual(const std::vector<double>& grid, const std::vector<double>& F_Y0,
                                         const std::vector<double>& F_Y_given_D0, double pi) {
    if (!(pi > 0.0 && pi <= 1.0)) throw DomainError("treated share pi must lie in (0,1]");
    if (F_Y0.size() != grid.size() || F_Y_given_D0.size() != grid.size())
        throw DomainError("counterfactual inputs must share the grid");
    CounterfactualCDF out;
    out.grid = grid;
    out.F.resize(grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const double v = (F_Y0[j] - (1.0 - pi) * F_Y_given_D0[j]) / pi;
        const double c = std::clamp(v, 0.0, 1.0);
        if (c != v) ++out.clipped;
        out.F[j] = c;
    }
    out.F = rearrange(out.F);
    return out;
}

CounterfactualCDF treated_counterfactual(const Dataset& data, const MarginalCDF& F) {
    const std::size_t n = data.n();
    double n1 = 0.0, n0z = 0.0, n1z0 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        n1 += data.d[i];
        if (data.z[i] == 0.0) {
            n0z += 1.0;
            n1z0 += data.d[i];
        }
    }
    const double pi = n1 / static_cast<double>(n);
    if (!(pi > 0.0)) throw DomainError("nobody is treated");
    std::vector<double> fd0(F.grid.size(), 0.0), fz0(F.grid.size(), 0.0);
    const double nd0 = static_cast<double>(n) - n1;
    for (std::size_t j = 0; j < F.grid.size(); ++j) {
        for (std::size_t i = 0; i < n; ++i) {
            if (data.y[i] > F.grid[j]) continue;
            if (data.d[i] == 0.0) fd0[j] += 1.0;
            if (data.z[i] == 0.0) fz0[j] += 1.0;
        }
        fd0[j] = nd0 > 0.0 ? fd0[j] / nd0 : 0.0;
        fz0[j] = n0z > 0.0 ? fz0[j] / n0z : 0.0;
    }
    const bool one_sided = n0z > 0.0 && n1z0 == 0.0;
    CounterfactualCDF out = treated_counterfactual(F.grid, one_sided ? fz0 : F.curve(0.0), fd0, pi);
    out.one_sided = one_sided;
    return out;
}

LocalDependenceValue marginal_local_dependence(const std::vector<double>& F, const std::vector<double>& rho,
                                               const std::vector<double>& weights, double v) {
    if (!(v > 0.0 && v < 1.0)) throw DomainError("v must lie in (0,1)");
    if (F.size() != rho.size() || F.size() != weights.size() || F.empty())
        throw DomainError("local dependence inputs must have equal, nonzero length");
    LocalDependenceValue out;
    double wsum = 0.0;
    for (std::size_t r = 0; r < F.size(); ++r) {
        out.F += weights[r] * F[r];
        out.joint += weights[r] * C(Family::Gaussian, F[r], v, rho[r]);
        wsum += weights[r];
    }
    out.F /= wsum;
    out.joint /= wsum;
    const double lo = std::max(out.F + v - 1.0, 0.0), hi = std::min(out.F, v);
    const double t = std::clamp(out.joint, lo, hi);
    if (t != out.joint) out.boundary = true;
    const RhoSolution s = solve_rho(Family::Gaussian, t, out.F, v);
    out.rho = s.rho;
    out.boundary = out.boundary || s.boundary;
    return out;
}

LocalDependenceValue marginal_local_dependence(const PotentialOutcomeFit& fit, double v, double d, double y) {
    const std::size_t l = fit.level_index(d);
    const auto it = std::find(fit.y_grid.begin(), fit.y_grid.end(), y);
    if (it == fit.y_grid.end()) throw DomainError("y must be a point of the fitted grid");
    const auto j = static_cast<Eigen::Index>(it - fit.y_grid.begin());
    const LevelFit& lf = fit.levels[l];
    std::vector<double> F, rho, w;
    for (Eigen::Index r = 0; r < lf.F_raw.rows(); ++r) {
        if (!lf.row_ok.empty() && !lf.row_ok[static_cast<std::size_t>(r)]) continue;
        F.push_back(lf.F_raw(r, j));
        rho.push_back(lf.rho(r, j));
        w.push_back(fit.row_weights(r));
    }
    return marginal_local_dependence(F, rho, w, v);
}

}  // namespace copiv
