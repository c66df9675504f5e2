#include "copiv/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "copiv/errors.hpp"
#include "copiv/gauss.hpp"

namespace copiv {

namespace fs = std::filesystem;

namespace {

// Read cfg[key], writing the default back so the manifest echoes every resolved value.
template <class T>
T value_or(json& cfg, const char* key, T fallback) {
    try {
        if (!cfg.contains(key)) cfg[key] = fallback;
        return cfg.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("'") + key + "': " + e.what());
    }
}

template <class T>
T required(const json& cfg, const char* key) {
    if (!cfg.contains(key)) throw ConfigError(std::string("missing required key '") + key + "'");
    try {
        return cfg.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("'") + key + "': " + e.what());
    }
}

json& section(json& cfg, const char* key) {
    if (!cfg.contains(key)) cfg[key] = json::object();
    if (!cfg[key].is_object()) throw ConfigError(std::string("'") + key + "' must be an object");
    return cfg[key];
}

std::string prepare_output(json& cfg) {
    const auto dir = value_or<std::string>(cfg, "output_dir", "copiv_out");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + dir + ": " + ec.message());
    return dir;
}

std::string in_dir(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::string num(double v) {
    if (!std::isfinite(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string tag(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::vector<double> default_taus() {
    std::vector<double> t;
    for (int k = 1; k <= 9; ++k) t.push_back(k / 10.0);
    return t;
}

std::vector<double> sorted_unique(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

void check_taus(const std::vector<double>& taus) {
    if (taus.empty()) throw ConfigError("tau list is empty");
    for (double t : taus)
        if (!(t > 0.0 && t < 1.0)) throw ConfigError("tau values must lie in (0,1); got " + num(t));
}

ColumnMap columns_from(json& cfg) {
    json& c = section(cfg, "columns");
    ColumnMap m;
    m.y = value_or<std::string>(c, "y", "y");
    m.d = value_or<std::string>(c, "d", "d");
    m.z = value_or<std::string>(c, "z", "z");
    if (c.contains("x")) m.x = required<std::vector<std::string>>(c, "x");
    return m;
}

// Covariate names as read_csv resolves them: the configured list, else every x<j> header.
std::vector<std::string> covariate_names(const std::string& path, const ColumnMap& m) {
    if (!m.x.empty()) return m.x;
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string h;
    while (std::getline(ss, h, ',')) {
        while (!h.empty() && (h.back() == '\r' || h.back() == ' ')) h.pop_back();
        if (h.size() > 1 && h[0] == 'x' && std::all_of(h.begin() + 1, h.end(), ::isdigit)) out.push_back(h);
    }
    return out;
}

std::vector<std::string> generated_names(int k) {
    std::vector<std::string> out;
    for (int j = 1; j <= k; ++j) out.push_back("x" + std::to_string(j));
    return out;
}

// Explicit list under `key`, else empirical quantiles of `values`.
std::vector<double> resolve_grid(json& g, const std::string& key, const std::vector<double>& values) {
    if (g.contains(key)) {
        auto v = sorted_unique(required<std::vector<double>>(g, key.c_str()));
        if (v.empty()) throw ConfigError("grids." + key + " is empty");
        return v;
    }
    const int count = value_or<int>(g, (key + "_count").c_str(), 99);
    const double lo = value_or<double>(g, (key + "_lo").c_str(), 0.01);
    const double hi = value_or<double>(g, (key + "_hi").c_str(), 0.99);
    if (count < 1 || !(lo > 0.0 && lo <= hi && hi < 1.0))
        throw ConfigError("grids." + key + ": need count >= 1 and 0 < lo <= hi < 1");
    return default_grid(values, static_cast<std::size_t>(count), lo, hi);
}

double nearest(const std::vector<double>& grid, double v) {
    return *std::min_element(grid.begin(), grid.end(),
                             [v](double a, double b) { return std::abs(a - v) < std::abs(b - v); });
}

BootScheme default_scheme(TreatmentKind kind) {
    return kind == TreatmentKind::Continuous ? BootScheme::Empirical : BootScheme::Multiplier;
}

std::string join(const std::vector<std::string>& v, const std::string& sep) {
    std::string out;
    for (std::size_t k = 0; k < v.size(); ++k) out += (k ? sep : "") + v[k];
    return out;
}

struct BandTarget {
    std::string name;
    FunctionalSpec spec;
};

void cardinality_warning(TreatmentKind kind, const Dataset& data, std::vector<std::string>& warnings) {
    const std::size_t distinct = support(data.d).size();
    if (kind == TreatmentKind::Continuous && distinct <= 10)
        warnings.push_back("continuous treatment has only " + std::to_string(distinct) + " distinct values");
    if (kind != TreatmentKind::Continuous && distinct > 20)
        warnings.push_back(to_string(kind) + " treatment has " + std::to_string(distinct) + " distinct values");
}

}  // namespace

json load_config(const CliOverrides& cli) {
    json cfg = cli.config.empty() ? json::object() : read_json(cli.config);
    if (!cfg.is_object()) throw ConfigError("configuration must be a JSON object");
    if (!cli.input.empty()) cfg["input"] = cli.input;
    if (!cli.output_dir.empty()) cfg["output_dir"] = cli.output_dir;
    if (cli.threads) cfg["threads"] = *cli.threads;
    if (cli.seed) {
        cfg["seed"] = *cli.seed;
        if (cfg.contains("bootstrap") && cfg["bootstrap"].is_object()) cfg["bootstrap"].erase("seed");
    }
    if (cli.bootstrap) section(cfg, "bootstrap")["B"] = *cli.bootstrap;
    if (cli.alpha) section(cfg, "bootstrap")["alpha"] = *cli.alpha;
    return cfg;
}

int exit_code(const std::exception& e) {
    if (const auto* err = dynamic_cast<const Error*>(&e)) return static_cast<int>(err->kind());
    if (dynamic_cast<const json::exception*>(&e)) return static_cast<int>(ErrorKind::Config);
    return static_cast<int>(ErrorKind::Numerical);
}

// ---------------------------------------------------------------- estimate

json cmd_estimate(const json& config) {
    json cfg = config;
    reset_clamp_counts();
    const std::string dir = prepare_output(cfg);
    const TreatmentKind kind = treatment_from_string(required<std::string>(cfg, "treatment"));
    const std::string input = required<std::string>(cfg, "input");
    const ColumnMap cols = columns_from(cfg);
    const Dataset data = read_csv(input, cols);
    const auto xnames = covariate_names(input, cols);
    const int threads = value_or<int>(cfg, "threads", 1);

    EstimateOptions opt;
    opt.threads = threads;
    opt.basis = basis_from_json(section(cfg, "basis"), xnames);
    cfg["basis"] = to_json(opt.basis, xnames);
    json& grids = section(cfg, "grids");
    opt.y_grid = resolve_grid(grids, "y", data.y);

    json& fn = section(cfg, "functionals");
    const auto taus = value_or<std::vector<double>>(fn, "tau", default_taus());
    check_taus(taus);
    const bool interpolate = value_or<bool>(fn, "interpolate", kind == TreatmentKind::Continuous);

    std::vector<std::pair<double, double>> pairs;
    if (fn.contains("pairs")) {
        for (const auto& p : required<std::vector<std::vector<double>>>(fn, "pairs")) {
            if (p.size() != 2 || p[0] == p[1]) throw ConfigError("functionals.pairs entries must be [d, d'] with d != d'");
            pairs.emplace_back(p[0], p[1]);
        }
    }
    if (kind == TreatmentKind::Continuous) {
        opt.d_grid = resolve_grid(grids, "d", data.d);
        if (pairs.empty()) {
            const auto q = empirical_quantiles(data.d, {0.25, 0.75});
            pairs.emplace_back(nearest(opt.d_grid, q[1]), nearest(opt.d_grid, q[0]));
        }
        for (const auto& [a, b] : pairs) {
            opt.d_grid.push_back(a);
            opt.d_grid.push_back(b);
        }
        opt.d_grid = sorted_unique(opt.d_grid);
    } else if (pairs.empty()) {
        const auto lv = support(data.d);
        for (std::size_t k = 0; k + 1 < lv.size(); ++k) pairs.emplace_back(lv[k + 1], lv[k]);
    }
    json pj = json::array();
    for (const auto& [a, b] : pairs) pj.push_back({a, b});
    fn["pairs"] = pj;

    json diagnostics;
    std::vector<std::string> warnings;
    cardinality_warning(kind, data, warnings);

    CheckOptions co;
    if (kind == TreatmentKind::Continuous) co.d_grid = opt.d_grid;
    const AssumptionReport check = check_assumptions(data, kind, co);
    diagnostics["assumptions"] = to_json(check);

    json& boot = section(cfg, "bootstrap");
    const int B = value_or<int>(boot, "B", 5000);
    const double alpha = value_or<double>(boot, "alpha", 0.1);
    const BootScheme scheme = boot_scheme_from_string(value_or<std::string>(boot, "scheme", to_string(default_scheme(kind))));
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("bootstrap.alpha must lie in (0,1)");
    std::uint64_t seed = 0;
    if (B > 0) {
        if (!boot.contains("seed") && !cfg.contains("seed"))
            throw ConfigError("a seed is required for the bootstrap (config 'seed' or --seed)");
        seed = boot.contains("seed") ? required<std::uint64_t>(boot, "seed") : required<std::uint64_t>(cfg, "seed");
        boot["seed"] = seed;
    }

    if (!check.ok()) {
        diagnostics["warnings"] = warnings;
        write_json(diagnostics, in_dir(dir, "diagnostics.json"));
        write_json(manifest("estimate", cfg, seed), in_dir(dir, "manifest.json"));
        throw AssumptionError(join(check.messages, "; "));
    }

    const PotentialOutcomeFit pf = fit(kind, data, opt);
    const MarginalCDF F = marginalize(pf);
    for (const auto& w : pf.warnings) warnings.push_back(w);

    json fit_json = to_json(pf);
    fit_json["marginal"] = to_json(F);
    write_json(fit_json, in_dir(dir, "fit.json"));

    // Point estimates.
    std::vector<std::string> boundary;
    std::ofstream csv(in_dir(dir, "functionals.csv"));
    if (!csv) throw ConfigError("cannot write functionals.csv");
    csv << "parameter,d,d_prime,tau_or_y,estimate\n";
    for (double d : F.levels)
        for (double y : F.grid) csv << "cdf," << num(d) << ",," << num(y) << ',' << num(F.value(d, y)) << '\n';
    for (double d : F.levels)
        for (double t : taus) {
            try {
                const double q = qsf(F, d, t, interpolate);
                csv << "qsf," << num(d) << ",," << num(t) << ',' << num(q) << '\n';
            } catch (const BoundaryError& e) {
                boundary.push_back(e.what());
            }
        }
    for (const auto& [a, b] : pairs)
        for (double t : taus) {
            try {
                const double v = qte(F, t, a, b, interpolate);
                csv << "qte," << num(a) << ',' << num(b) << ',' << num(t) << ',' << num(v) << '\n';
            } catch (const BoundaryError&) {
            }
        }
    json truncation = json::array();
    for (double d : F.levels) {
        const AsfValue v = asf_detail(F, d);
        csv << "asf," << num(d) << ",,," << num(v.value) << '\n';
        truncation.push_back({{"d", d}, {"bound", v.truncation_bound}});
    }
    for (const auto& [a, b] : pairs) csv << "ate," << num(a) << ',' << num(b) << ",," << num(ate(F, a, b)) << '\n';
    csv.close();

    json fit_diag;
    fit_diag["first_stage_flagged"] = pf.first_stage.flagged_count();
    json lv = json::array();
    for (const LevelFit& l : pf.levels) {
        std::vector<double> flagged_y;
        for (std::size_t j = 0; j < pf.y_grid.size(); ++j)
            if (l.flagged[j]) flagged_y.push_back(pf.y_grid[j]);
        lv.push_back({{"d", l.d}, {"flagged_y", flagged_y}, {"weak_rows", l.weak_rows()}});
    }
    fit_diag["levels"] = lv;
    diagnostics["fit"] = fit_diag;
    diagnostics["asf_truncation"] = truncation;
    diagnostics["qsf_boundary"] = boundary;

    // Bands.
    json bands_json = json::array();
    if (B > 0) {
        const auto names = value_or<std::vector<std::string>>(fn, "bands", {"qte"});
        std::vector<double> band_levels;
        if (kind == TreatmentKind::Continuous) {
            for (const auto& [a, b] : pairs) {
                band_levels.push_back(a);
                band_levels.push_back(b);
            }
            band_levels = sorted_unique(band_levels);
        } else {
            band_levels = F.levels;
        }
        std::vector<BandTarget> targets;
        for (const auto& nm : names) {
            const Functional f = functional_from_string(nm);
            switch (f) {
                case Functional::Cdf:
                case Functional::Qsf:
                    for (double d : band_levels)
                        targets.push_back({nm + "_" + tag(d), {f, d, d, f == Functional::Cdf ? pf.y_grid : taus, interpolate}});
                    break;
                case Functional::Qte:
                case Functional::Ate:
                    for (const auto& [a, b] : pairs)
                        targets.push_back({nm + "_" + tag(a) + "_" + tag(b),
                                           {f, a, b, f == Functional::Qte ? taus : std::vector<double>{a}, interpolate}});
                    break;
                case Functional::Asf: targets.push_back({nm, {f, 0.0, 0.0, band_levels, interpolate}}); break;
            }
        }

        EstimateOptions bopt = opt;
        bopt.threads = 1;
        if (kind == TreatmentKind::Continuous) bopt.d_grid = band_levels;
        const PotentialOutcomeFit base = kind == TreatmentKind::Continuous ? fit(kind, data, bopt) : pf;

        // Keep only points the full-sample fit can evaluate (qsf needs tau <= F(y_max)).
        std::vector<std::vector<double>> est(targets.size());
        for (auto& t : targets) {
            std::vector<double> keep;
            for (double u : t.spec.points) {
                FunctionalSpec one = t.spec;
                if (t.spec.kind != Functional::Ate) one.points = {u};
                try {
                    evaluate_functional(base, one);
                    keep.push_back(u);
                } catch (const BoundaryError&) {
                    diagnostics["band_points_dropped"].push_back({{"band", t.name}, {"u", u}});
                }
            }
            t.spec.points = keep;
        }
        std::erase_if(targets, [](const BandTarget& t) { return t.spec.points.empty(); });
        for (std::size_t k = 0; k < targets.size(); ++k) est[k] = evaluate_functional(base, targets[k].spec);
        est.resize(targets.size());

        const PotentialOutcomeFit* warm = scheme == BootScheme::Multiplier ? &base : nullptr;
        Pipeline pipeline = [&](const Dataset& d, const Eigen::VectorXd& w) {
            EstimateOptions e = bopt;
            e.weights = w;
            e.flag_thin = true;
            const PotentialOutcomeFit f = fit(kind, d, e, warm);
            std::vector<double> out;
            for (const auto& t : targets) {
                const auto v = evaluate_functional(f, t.spec);
                out.insert(out.end(), v.begin(), v.end());
            }
            return out;
        };
        BootstrapOptions bo;
        bo.B = B;
        bo.scheme = scheme;
        bo.seed = seed;
        bo.threads = threads;
        const BootstrapDraws draws = bootstrap(data, pipeline, bo);
        diagnostics["bootstrap"] = {{"B", B}, {"dropped", draws.dropped}, {"failures", draws.failures}};

        Eigen::Index col = 0;
        for (std::size_t k = 0; k < targets.size(); ++k) {
            const auto m = static_cast<Eigen::Index>(est[k].size());
            BandResult band = bands(targets[k].spec.points, est[k], draws.draws.middleCols(col, m), alpha);
            col += m;
            band.B = B;
            band.scheme = scheme;
            band.seed = seed;
            const std::string file = "bands_" + targets[k].name + ".csv";
            write_band_csv(band, in_dir(dir, file));
            json bj = to_json(band);
            bj["name"] = targets[k].name;
            bj["file"] = file;
            bj["functional"] = to_string(targets[k].spec.kind);
            bj["d"] = targets[k].spec.d;
            bj["d_prime"] = targets[k].spec.d2;
            bands_json.push_back(bj);
        }
        write_json(bands_json, in_dir(dir, "bands.json"));
    }

    const ClampCounts cc = clamp_counts();
    diagnostics["clamp_events"] = {{"prob", cc.prob}, {"corr", cc.corr}};
    diagnostics["warnings"] = warnings;
    write_json(diagnostics, in_dir(dir, "diagnostics.json"));
    const json man = manifest("estimate", cfg, seed);
    write_json(man, in_dir(dir, "manifest.json"));

    return {{"command", "estimate"},
            {"output_dir", dir},
            {"n", data.n()},
            {"levels", F.levels.size()},
            {"y_points", F.grid.size()},
            {"bands", bands_json.size()},
            {"warnings", warnings},
            {"config_hash", man["config_hash"]}};
}

// ---------------------------------------------------------------- simulate

json cmd_simulate(const json& config) {
    json cfg = config;
    reset_clamp_counts();
    const std::string dir = prepare_output(cfg);
    const DgpSpec spec = dgp_from_json(required<json>(cfg, "dgp"));
    cfg["dgp"] = to_json(spec);
    const auto n = required<std::size_t>(cfg, "n");
    if (!cfg.contains("seed")) throw ConfigError("simulate needs an explicit seed (config 'seed' or --seed)");
    const auto seed = required<std::uint64_t>(cfg, "seed");
    const int threads = value_or<int>(cfg, "threads", 1);

    const SimulatedData sim = simulate(spec, n, seed, threads);
    write_csv(sim.data, in_dir(dir, "data.csv"));

    json& t = section(cfg, "truth");
    const auto taus = value_or<std::vector<double>>(t, "tau", default_taus());
    check_taus(taus);
    std::vector<double> levels;
    if (t.contains("d")) {
        levels = sorted_unique(required<std::vector<double>>(t, "d"));
    } else if (spec.selection.kind == TreatmentKind::Binary) {
        levels = {0.0, 1.0};
    } else if (spec.selection.kind == TreatmentKind::Ordered) {
        for (int k = 1; k <= spec.selection.levels(); ++k) levels.push_back(k);
    } else {
        const auto& mu = spec.selection.mu;
        const double lo = *std::min_element(mu.begin(), mu.end()), hi = *std::max_element(mu.begin(), mu.end());
        levels = lo < hi ? std::vector<double>{lo, hi} : std::vector<double>{lo - spec.selection.sd, lo + spec.selection.sd};
    }
    t["d"] = levels;

    std::vector<double> ygrid;
    if (t.contains("y")) {
        ygrid = sorted_unique(required<std::vector<double>>(t, "y"));
    } else {
        const int count = value_or<int>(t, "y_count", 99);
        if (count < 2) throw ConfigError("truth.y_count must be >= 2");
        double lo = INFINITY, hi = -INFINITY;
        for (double d : levels) {
            lo = std::min(lo, true_qsf(spec, d, 0.01));
            hi = std::max(hi, true_qsf(spec, d, 0.99));
        }
        for (int k = 0; k < count; ++k) ygrid.push_back(lo + (hi - lo) * k / (count - 1));
    }

    const std::vector<double> x0(static_cast<std::size_t>(spec.covariates), 0.0);
    json tl = json::array();
    std::vector<std::vector<double>> q(levels.size());
    for (std::size_t l = 0; l < levels.size(); ++l) {
        const double d = levels[l];
        std::vector<double> F, rho;
        for (double y : ygrid) {
            F.push_back(true_cdf(spec, d, y));
            rho.push_back(true_rho(spec, d, y, x0));
        }
        for (double tau : taus) q[l].push_back(true_qsf(spec, d, tau));
        tl.push_back({{"d", d}, {"F", F}, {"rho_at_x0", rho}, {"qsf", q[l]}, {"asf", true_mean(spec, d)}});
    }
    json qt = json::array();
    for (std::size_t l = 0; l + 1 < levels.size(); ++l) {
        const double a = levels[l + 1], b = levels[l];
        std::vector<double> v;
        for (std::size_t k = 0; k < taus.size(); ++k) v.push_back((q[l + 1][k] - q[l][k]) / (a - b));
        qt.push_back({{"d", a}, {"d_prime", b}, {"qte", v}, {"ate", (true_mean(spec, a) - true_mean(spec, b)) / (a - b)}});
    }
    const json truth = {{"y", ygrid}, {"tau", taus}, {"levels", tl}, {"effects", qt}};
    write_json(truth, in_dir(dir, "truth.json"));
    const json man = manifest("simulate", cfg, seed);
    write_json(man, in_dir(dir, "manifest.json"));
    return {{"command", "simulate"}, {"output_dir", dir}, {"n", n}, {"seed", seed}, {"config_hash", man["config_hash"]}};
}

// ---------------------------------------------------------------- coverage

json cmd_coverage(const json& config) {
    json cfg = config;
    reset_clamp_counts();
    const std::string dir = prepare_output(cfg);
    const DgpSpec spec = dgp_from_json(required<json>(cfg, "dgp"));
    cfg["dgp"] = to_json(spec);
    const TreatmentKind kind =
        treatment_from_string(value_or<std::string>(cfg, "treatment", to_string(spec.selection.kind)));
    if (!cfg.contains("seed")) throw ConfigError("coverage needs an explicit seed (config 'seed' or --seed)");

    EstimateOptions est;
    const auto names = generated_names(spec.covariates);
    est.basis = basis_from_json(section(cfg, "basis"), names);
    cfg["basis"] = to_json(est.basis, names);
    json& grids = section(cfg, "grids");
    if (grids.contains("y")) est.y_grid = sorted_unique(required<std::vector<double>>(grids, "y"));
    if (grids.contains("d")) est.d_grid = sorted_unique(required<std::vector<double>>(grids, "d"));

    json& tg = section(cfg, "target");
    FunctionalSpec target;
    target.kind = functional_from_string(value_or<std::string>(tg, "functional", "cdf"));
    target.d = required<double>(tg, "d");
    target.d2 = value_or<double>(tg, "d_prime", target.d);
    target.points = required<std::vector<double>>(tg, "points");
    target.interpolate = value_or<bool>(tg, "interpolate", kind == TreatmentKind::Continuous);
    if (target.points.empty()) throw ConfigError("target.points is empty");

    CoverageOptions opt;
    opt.n = required<std::size_t>(cfg, "n");
    opt.reps = value_or<int>(cfg, "reps", 200);
    opt.seed = required<std::uint64_t>(cfg, "seed");
    opt.threads = value_or<int>(cfg, "threads", 1);
    opt.budget = value_or<double>(cfg, "budget", 1e11);
    const auto baseline = value_or<std::string>(cfg, "baseline", "iv");
    if (baseline != "iv" && baseline != "exogenous") throw ConfigError("baseline must be 'iv' or 'exogenous'");
    opt.exogenous_baseline = baseline == "exogenous";
    json& boot = section(cfg, "bootstrap");
    opt.B = value_or<int>(boot, "B", 299);
    opt.alpha = value_or<double>(boot, "alpha", 0.1);
    opt.scheme = boot_scheme_from_string(value_or<std::string>(boot, "scheme", to_string(default_scheme(kind))));

    const CoverageReport rep = coverage_study(spec, kind, est, target, opt);
    write_json(to_json(rep), in_dir(dir, "coverage.json"));
    const json man = manifest("coverage", cfg, opt.seed);
    write_json(man, in_dir(dir, "manifest.json"));
    return {{"command", "coverage"},
            {"output_dir", dir},
            {"pointwise_mean", rep.pointwise_mean},
            {"uniform", rep.uniform},
            {"mc_se", rep.mc_se},
            {"failed_reps", rep.failed_reps},
            {"config_hash", man["config_hash"]}};
}

// ---------------------------------------------------------------- check

json cmd_check(const json& config) {
    json cfg = config;
    reset_clamp_counts();
    const std::string dir = prepare_output(cfg);
    const TreatmentKind kind = treatment_from_string(required<std::string>(cfg, "treatment"));
    const std::string input = required<std::string>(cfg, "input");
    const Dataset data = read_csv(input, columns_from(cfg));

    CheckOptions co;
    co.instruments = value_or<int>(cfg, "instruments", 1);
    json& grids = section(cfg, "grids");
    if (grids.contains("d")) co.d_grid = sorted_unique(required<std::vector<double>>(grids, "d"));
    if (grids.contains("y")) co.y_grid = sorted_unique(required<std::vector<double>>(grids, "y"));
    co.bootstrap = value_or<int>(section(cfg, "bootstrap"), "B", 200);
    co.seed = value_or<std::uint64_t>(cfg, "seed", 1);

    std::vector<std::string> warnings;
    cardinality_warning(kind, data, warnings);
    const AssumptionReport rep = check_assumptions(data, kind, co);
    json diag = {{"assumptions", to_json(rep)}, {"warnings", warnings}};
    write_json(diag, in_dir(dir, "diagnostics.json"));
    const json man = manifest("check", cfg, co.seed);
    write_json(man, in_dir(dir, "manifest.json"));
    if (!rep.ok()) throw AssumptionError(join(rep.messages, "; "));
    return {{"command", "check"}, {"output_dir", dir}, {"ok", true}, {"messages", rep.messages}, {"config_hash", man["config_hash"]}};
}

}  // namespace copiv
