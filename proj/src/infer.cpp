#include "copiv/infer.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include "copiv/errors.hpp"
#include "copiv/functionals.hpp"
#include "copiv/gauss.hpp"
#include "copiv/parallel.hpp"
#include "copiv/rng.hpp"

namespace copiv {

namespace {
// Phi^-1(0.75) - Phi^-1(0.25)
constexpr double kNormalIqr = 1.3489795003921634;
constexpr std::size_t kKeepFailures = 5;
}  // namespace

std::string to_string(BootScheme s) { return s == BootScheme::Empirical ? "empirical" : "multiplier"; }

BootScheme boot_scheme_from_string(const std::string& s) {
    if (s == "empirical") return BootScheme::Empirical;
    if (s == "multiplier") return BootScheme::Multiplier;
    throw ConfigError("unknown bootstrap scheme '" + s + "' (empirical|multiplier)");
}

std::string to_string(Functional f) {
    switch (f) {
        case Functional::Cdf: return "cdf";
        case Functional::Qsf: return "qsf";
        case Functional::Qte: return "qte";
        case Functional::Asf: return "asf";
        case Functional::Ate: return "ate";
    }
    return "?";
}

Functional functional_from_string(const std::string& s) {
    for (Functional f : {Functional::Cdf, Functional::Qsf, Functional::Qte, Functional::Asf, Functional::Ate})
        if (to_string(f) == s) return f;
    throw ConfigError("unknown functional '" + s + "' (cdf|qsf|qte|asf|ate)");
}

BootstrapDraws bootstrap(const Dataset& data, const Pipeline& pipeline, const BootstrapOptions& opt) {
    if (opt.B < 100) throw ConfigError("bootstrap needs B >= 100");
    const std::size_t n = data.n();
    const auto B = static_cast<std::size_t>(opt.B);
    std::vector<std::vector<double>> out(B);
    std::vector<std::string> err(B);
    parallel_for(B, opt.threads, [&](std::size_t b) {
        CounterRng rng(opt.seed, b);
        try {
            if (opt.scheme == BootScheme::Empirical) {
                std::vector<std::size_t> idx(n);
                for (auto& i : idx) i = static_cast<std::size_t>(rng.below(n));
                out[b] = pipeline(data.rows(idx), Eigen::VectorXd());
            } else {
                Eigen::VectorXd w(static_cast<Eigen::Index>(n));
                for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.exponential();
                out[b] = pipeline(data, w);
            }
        } catch (const std::exception& e) {
            out[b].clear();
            err[b] = e.what();
        }
    });
    BootstrapDraws res;
    std::size_t width = 0;
    for (const auto& o : out)
        if (!o.empty()) width = o.size();
    for (std::size_t b = 0; b < B; ++b) {
        if (out[b].empty() || out[b].size() != width) {
            ++res.dropped;
            if (res.failures.size() < kKeepFailures)
                res.failures.push_back("replicate " + std::to_string(b) + ": " + (err[b].empty() ? "bad output" : err[b]));
        }
    }
    if (static_cast<double>(res.dropped) > opt.max_fail * static_cast<double>(B))
        throw NonConvergenceError(std::to_string(res.dropped) + " of " + std::to_string(B) +
                                  " bootstrap replicates failed" +
                                  (res.failures.empty() ? std::string() : "; first: " + res.failures.front()));
    res.draws.resize(static_cast<Eigen::Index>(B - res.dropped), static_cast<Eigen::Index>(width));
    Eigen::Index row = 0;
    for (std::size_t b = 0; b < B; ++b) {
        if (out[b].size() != width || out[b].empty()) continue;
        for (std::size_t k = 0; k < width; ++k) res.draws(row, static_cast<Eigen::Index>(k)) = out[b][k];
        res.replicate.push_back(static_cast<int>(b));
        ++row;
    }
    return res;
}

RobustSE robust_se(std::vector<double> draws) {
    RobustSE out;
    std::sort(draws.begin(), draws.end());
    if (draws.size() < 2 || draws.front() == draws.back()) {
        out.degenerate = true;
        return out;
    }
    const auto q = empirical_quantiles(draws, {0.25, 0.75});
    out.se = (q[1] - q[0]) / kNormalIqr;
    return out;
}

double order_quantile(std::vector<double> v, double level) {
    if (v.empty()) throw DomainError("quantile of an empty set");
    std::sort(v.begin(), v.end());
    const double B = static_cast<double>(v.size());
    auto k = static_cast<std::size_t>(std::ceil(level * (B + 1.0) - 1e-9));
    k = std::clamp<std::size_t>(k, 1, v.size());
    return v[k - 1];
}

BandResult bands(const std::vector<double>& u, const std::vector<double>& estimate, const Eigen::MatrixXd& draws,
                 double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
    const std::size_t m = estimate.size();
    if (u.size() != m || static_cast<std::size_t>(draws.cols()) != m) throw DomainError("band inputs differ in length");
    if (draws.rows() < 2) throw DomainError("bands need at least two bootstrap draws");
    BandResult out;
    out.u = u;
    out.estimate = estimate;
    out.alpha = alpha;
    out.B = static_cast<int>(draws.rows());
    out.se.resize(m);
    out.cv_pointwise.assign(m, 0.0);
    for (std::size_t k = 0; k < m; ++k) {
        const auto col = draws.col(static_cast<Eigen::Index>(k));
        out.se[k] = robust_se(std::vector<double>(col.begin(), col.end())).se;
        if (out.se[k] <= 0.0) ++out.zero_se;
    }
    if (out.zero_se == m) throw DomainError("all bootstrap standard errors are zero");
    std::vector<double> tmax(static_cast<std::size_t>(draws.rows()), 0.0);
    for (std::size_t k = 0; k < m; ++k) {
        if (out.se[k] <= 0.0) continue;
        std::vector<double> t(static_cast<std::size_t>(draws.rows()));
        for (Eigen::Index b = 0; b < draws.rows(); ++b) {
            t[static_cast<std::size_t>(b)] = std::abs(draws(b, static_cast<Eigen::Index>(k)) - estimate[k]) / out.se[k];
            tmax[static_cast<std::size_t>(b)] = std::max(tmax[static_cast<std::size_t>(b)], t[static_cast<std::size_t>(b)]);
        }
        out.cv_pointwise[k] = order_quantile(std::move(t), 1.0 - alpha);
    }
    out.cv_uniform = order_quantile(std::move(tmax), 1.0 - alpha);
    for (std::size_t k = 0; k < m; ++k) {
        out.lo_pt.push_back(estimate[k] - out.cv_pointwise[k] * out.se[k]);
        out.hi_pt.push_back(estimate[k] + out.cv_pointwise[k] * out.se[k]);
        out.lo_unif.push_back(estimate[k] - out.cv_uniform * out.se[k]);
        out.hi_unif.push_back(estimate[k] + out.cv_uniform * out.se[k]);
    }
    return out;
}

std::vector<double> evaluate_functional(const PotentialOutcomeFit& fit, const FunctionalSpec& spec) {
    const MarginalCDF F = marginalize(fit);
    std::vector<double> out;
    switch (spec.kind) {
        case Functional::Cdf:
            for (double y : spec.points) out.push_back(F.value(spec.d, y));
            break;
        case Functional::Qsf:
            for (double t : spec.points) out.push_back(qsf(F, spec.d, t, spec.interpolate));
            break;
        case Functional::Qte:
            for (double t : spec.points) out.push_back(qte(F, t, spec.d, spec.d2, spec.interpolate));
            break;
        case Functional::Asf:
            for (double d : spec.points) out.push_back(asf(F, d));
            break;
        case Functional::Ate: out.push_back(ate(F, spec.d, spec.d2)); break;
    }
    return out;
}

std::vector<double> functional_levels(const FunctionalSpec& spec) {
    switch (spec.kind) {
        case Functional::Cdf:
        case Functional::Qsf: return {spec.d};
        case Functional::Asf: return spec.points;
        case Functional::Qte:
        case Functional::Ate: break;
    }
    return {std::min(spec.d, spec.d2), std::max(spec.d, spec.d2)};
}

std::vector<double> true_functional(const DgpSpec& dgp, const FunctionalSpec& spec) {
    std::vector<double> out;
    switch (spec.kind) {
        case Functional::Cdf:
            for (double y : spec.points) out.push_back(true_cdf(dgp, spec.d, y));
            break;
        case Functional::Qsf:
            for (double t : spec.points) out.push_back(true_qsf(dgp, spec.d, t));
            break;
        case Functional::Qte:
            for (double t : spec.points)
                out.push_back((true_qsf(dgp, spec.d, t) - true_qsf(dgp, spec.d2, t)) / (spec.d - spec.d2));
            break;
        case Functional::Asf:
            for (double d : spec.points) out.push_back(true_mean(dgp, d));
            break;
        case Functional::Ate: out.push_back((true_mean(dgp, spec.d) - true_mean(dgp, spec.d2)) / (spec.d - spec.d2)); break;
    }
    return out;
}

CoverageReport coverage_study(const DgpSpec& dgp, TreatmentKind kind, const EstimateOptions& est,
                              const FunctionalSpec& target, const CoverageOptions& opt) {
    dgp.validate();
    const double cost = static_cast<double>(opt.reps) * opt.B * static_cast<double>(opt.n);
    if (cost > opt.budget)
        throw BudgetError("reps * B * n = " + std::to_string(cost) + " exceeds the budget " + std::to_string(opt.budget));
    if (opt.reps < 1) throw ConfigError("coverage study needs reps >= 1");
    CoverageReport rep;
    rep.points = target.points;
    rep.truth = true_functional(dgp, target);
    rep.nominal = 1.0 - opt.alpha;
    const std::size_t m = rep.truth.size();
    const auto R = static_cast<std::size_t>(opt.reps);
    std::vector<std::vector<int>> hit(R);
    std::vector<int> uni(R, 0), ok(R, 0);
    parallel_for(R, opt.threads, [&](std::size_t r) {
        try {
            const SimulatedData sim = simulate(dgp, opt.n, splitmix64(opt.seed ^ (0x9e37ULL + r)));
            EstimateOptions e = est;
            if (kind == TreatmentKind::Continuous && e.d_grid.empty()) e.d_grid = functional_levels(target);
            auto run = [&](const Dataset& d, const Eigen::VectorXd& w, const PotentialOutcomeFit* warm) {
                EstimateOptions ew = e;
                ew.weights = w;
                ew.threads = 1;
                ew.flag_thin = true;
                const PotentialOutcomeFit f = opt.exogenous_baseline ? fit_exogenous_dr(d, kind, ew) : fit(kind, d, ew, warm);
                return evaluate_functional(f, target);
            };
            if (e.y_grid.empty()) e.y_grid = default_grid(sim.data.y);
            EstimateOptions e0 = e;
            e0.threads = 1;
            const PotentialOutcomeFit full =
                opt.exogenous_baseline ? fit_exogenous_dr(sim.data, kind, e0) : fit(kind, sim.data, e0);
            const std::vector<double> est_u = evaluate_functional(full, target);
            BootstrapOptions bo;
            bo.B = opt.B;
            bo.scheme = opt.scheme;
            bo.seed = splitmix64(opt.seed + 7919ULL * (r + 1));
            bo.threads = 1;
            const PotentialOutcomeFit* warm = opt.scheme == BootScheme::Multiplier ? &full : nullptr;
            const BootstrapDraws dr = bootstrap(
                sim.data, [&](const Dataset& d, const Eigen::VectorXd& w) { return run(d, w, warm); }, bo);
            const BandResult band = bands(target.points, est_u, dr.draws, opt.alpha);
            hit[r].assign(m, 0);
            bool all = true;
            for (std::size_t k = 0; k < m; ++k) {
                hit[r][k] = rep.truth[k] >= band.lo_pt[k] && rep.truth[k] <= band.hi_pt[k];
                all = all && rep.truth[k] >= band.lo_unif[k] && rep.truth[k] <= band.hi_unif[k];
            }
            uni[r] = all;
            ok[r] = 1;
        } catch (const Error&) {
            ok[r] = 0;
        }
    });
    rep.pointwise.assign(m, 0.0);
    for (std::size_t r = 0; r < R; ++r) {
        if (!ok[r]) {
            ++rep.failed_reps;
            continue;
        }
        ++rep.reps;
        for (std::size_t k = 0; k < m; ++k) rep.pointwise[k] += hit[r][k];
        rep.uniform += uni[r];
    }
    if (rep.reps == 0) throw NonConvergenceError("every coverage replication failed");
    const double nr = rep.reps;
    for (double& p : rep.pointwise) p /= nr;
    rep.uniform /= nr;
    rep.pointwise_mean = 0.0;
    for (double p : rep.pointwise) rep.pointwise_mean += p / static_cast<double>(m);
    rep.pointwise_min = *std::min_element(rep.pointwise.begin(), rep.pointwise.end());
    rep.mc_se = std::sqrt(rep.pointwise_mean * (1.0 - rep.pointwise_mean) / nr);
    return rep;
}

}  // namespace copiv
