#include "copiv/serialize.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "copiv/errors.hpp"
#include "copiv/gauss.hpp"

namespace copiv {

namespace {

json matrix(const Eigen::MatrixXd& m) {
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        out.push_back(row);
    }
    return out;
}

json grid_diag(const std::vector<GridDiagnostics>& d) {
    json out = json::array();
    for (const auto& g : d) {
        json e = {{"converged", g.converged}, {"flagged", g.flagged}, {"iterations", g.iterations},
                  {"grad_norm", g.grad_norm}};
        if (!g.message.empty()) e["message"] = g.message;
        out.push_back(e);
    }
    return out;
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

std::string z_mode_name(ZMode m) {
    switch (m) {
        case ZMode::None: return "none";
        case ZMode::Additive: return "additive";
        case ZMode::Saturated: return "saturated";
    }
    return "?";
}

}  // namespace

// ---------------------------------------------------------------- DGP

json to_json(const DgpSpec& s) {
    json out;
    const Marginal& m = s.outcome.marginal;
    json marg;
    if (m.kind == Marginal::Kind::Gaussian)
        marg = {{"gaussian", {{"mean", m.mean}, {"sd", m.sd}}}};
    else
        marg = {{"step", {{"atoms", m.atoms}, {"probs", m.probs}}}};
    const RhoCurve& r = s.outcome.rho;
    json rho;
    switch (r.kind) {
        case RhoCurve::Kind::Constant: rho = r.value; break;
        case RhoCurve::Kind::Bump:
            rho = {{"bump", {{"center", r.center}, {"width", r.width}, {"base", r.base}}}};
            break;
        case RhoCurve::Kind::Tanh: rho = {{"tanh", {r.alpha, r.beta}}}; break;
    }
    out["outcome"] = {{"marginal", marg},          {"rho", rho},           {"loc0", s.outcome.loc0},
                      {"loc1", s.outcome.loc1},    {"theta", s.outcome.theta}};
    const SelectionLaw& sel = s.selection;
    out["selection"] = {{"kind", to_string(sel.kind)}, {"pi", sel.pi},       {"mu", sel.mu},
                        {"sd", sel.sd},                {"kappa", sel.kappa}, {"rho_v", sel.rho_v}};
    out["covariates"] = s.covariates;
    out["p_z"] = s.p_z;
    out["instruments"] = s.instruments;
    return out;
}

DgpSpec dgp_from_json(const json& j) {
    DgpSpec s;
    try {
        const json& o = j.at("outcome");
        const json m = o.value("marginal", json("gaussian"));
        if (m.is_string()) {
            const auto name = m.get<std::string>();
            if (name == "gaussian")
                s.outcome.marginal = Marginal::gaussian();
            else if (name == "three_atom")
                s.outcome.marginal = Marginal::three_atom();
            else
                throw ConfigError("unknown marginal '" + name + "' (gaussian|three_atom|{step})");
        } else if (m.contains("gaussian")) {
            s.outcome.marginal = Marginal::gaussian(get_or(m["gaussian"], "mean", 0.0), get_or(m["gaussian"], "sd", 1.0));
        } else if (m.contains("step")) {
            s.outcome.marginal =
                Marginal::step(m["step"].at("atoms").get<std::vector<double>>(), m["step"].at("probs").get<std::vector<double>>());
        } else {
            throw ConfigError("outcome.marginal must be a name or an object with 'gaussian' or 'step'");
        }
        const json r = o.value("rho", json(0.0));
        if (r.is_number()) {
            s.outcome.rho = RhoCurve::constant(r.get<double>());
        } else if (r.is_string()) {
            if (r.get<std::string>() != "bump") throw ConfigError("outcome.rho string must be 'bump'");
            s.outcome.rho = RhoCurve::bump();
        } else if (r.contains("bump")) {
            s.outcome.rho = RhoCurve::bump();
            s.outcome.rho.center = get_or(r["bump"], "center", s.outcome.rho.center);
            s.outcome.rho.width = get_or(r["bump"], "width", s.outcome.rho.width);
            s.outcome.rho.base = get_or(r["bump"], "base", s.outcome.rho.base);
        } else if (r.contains("tanh")) {
            const auto ab = r["tanh"].get<std::vector<double>>();
            if (ab.size() != 2) throw ConfigError("outcome.rho.tanh needs [alpha, beta]");
            s.outcome.rho.kind = RhoCurve::Kind::Tanh;
            s.outcome.rho.alpha = ab[0];
            s.outcome.rho.beta = ab[1];
        } else {
            throw ConfigError("outcome.rho must be a number, 'bump', {bump} or {tanh}");
        }
        s.outcome.loc0 = get_or(o, "loc0", 0.0);
        s.outcome.loc1 = get_or(o, "loc1", 0.0);
        s.outcome.theta = get_or(o, "theta", std::vector<double>{});

        const json& sel = j.at("selection");
        s.selection.kind = treatment_from_string(sel.at("kind").get<std::string>());
        s.selection.pi = get_or(sel, "pi", std::vector<std::vector<double>>{});
        s.selection.mu = get_or(sel, "mu", std::vector<double>{});
        s.selection.sd = get_or(sel, "sd", 1.0);
        s.selection.kappa = get_or(sel, "kappa", std::vector<double>{});
        s.selection.rho_v = get_or(sel, "rho_v", 1.0);
        s.covariates = get_or(j, "covariates", 0);
        s.p_z = get_or(j, "p_z", 0.5);
        s.instruments = get_or(j, "instruments", 1);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("dgp: ") + e.what());
    }
    s.validate();
    return s;
}

// ---------------------------------------------------------------- fits

json to_json(const DRFit& f) {
    return {{"side", f.side == DRSide::Outcome ? "outcome" : "treatment"},
            {"grid", f.grid},
            {"coef", matrix(f.coef)},
            {"flagged", f.flagged_count()},
            {"diagnostics", grid_diag(f.diagnostics)}};
}

json to_json(const PotentialOutcomeFit& f) {
    json out;
    out["treatment"] = to_string(f.kind);
    out["y_grid"] = f.y_grid;
    out["extrapolation"] = f.extrapolation == Extrapolation::Step ? "step" : "linear";
    out["covariate_rows"] = f.x_rows.rows();
    out["first_stage"] = to_json(f.first_stage);
    if (f.outcome_stage) out["outcome_stage"] = to_json(*f.outcome_stage);
    json levels = json::array();
    for (const LevelFit& l : f.levels) {
        json e;
        e["d"] = l.d;
        if (l.beta.size() > 0) {
            e["beta"] = matrix(l.beta);
            e["gamma"] = matrix(l.gamma);
        }
        e["flagged"] = l.flagged_count();
        e["weak_rows"] = l.weak_rows();
        if (l.F.rows() == 1) {
            e["F"] = std::vector<double>(l.F.row(0).begin(), l.F.row(0).end());
            e["rho"] = std::vector<double>(l.rho.row(0).begin(), l.rho.row(0).end());
        }
        e["diagnostics"] = grid_diag(l.diag);
        levels.push_back(e);
    }
    out["levels"] = levels;
    out["warnings"] = f.warnings;
    return out;
}

json to_json(const MarginalCDF& F) {
    json out = {{"grid", F.grid}, {"rule", F.rule == Extrapolation::Step ? "step" : "linear"}};
    json lv = json::array();
    for (std::size_t l = 0; l < F.levels.size(); ++l)
        lv.push_back({{"d", F.levels[l]}, {"F", F.curve(F.levels[l])}});
    out["levels"] = lv;
    return out;
}

json to_json(const BandResult& b) {
    return {{"u", b.u},           {"estimate", b.estimate},   {"se", b.se},           {"cv_pointwise", b.cv_pointwise},
            {"cv_uniform", b.cv_uniform}, {"lo_pt", b.lo_pt}, {"hi_pt", b.hi_pt},     {"lo_unif", b.lo_unif},
            {"hi_unif", b.hi_unif}, {"zero_se", b.zero_se},  {"alpha", b.alpha},     {"B", b.B},
            {"scheme", to_string(b.scheme)}, {"seed", b.seed}};
}

json to_json(const AssumptionReport& r) {
    json out = {{"treatment", to_string(r.kind)},
                {"points", r.points},
                {"F_D_given_z0", r.F0},
                {"F_D_given_z1", r.F1},
                {"min_gap", r.min_gap},
                {"min_probit_gap", r.min_probit_gap},
                {"rel_ok", r.rel_ok},
                {"uoc_direction", r.uoc_direction},
                {"uoc_violations", r.uoc_violations},
                {"uoc_ok", r.uoc_ok},
                {"ok", r.ok()},
                {"messages", r.messages}};
    if (!r.overid_F.empty()) {
        json disc = json::array();
        for (double v : r.overid_F) disc.push_back(std::isfinite(v) ? json(v) : json(nullptr));
        out["overid"] = {{"F_discrepancy", disc}, {"max", r.overid_max}, {"bootstrap_sd", r.overid_bootstrap_sd}};
    }
    return out;
}

json to_json(const CoverageReport& r) {
    return {{"points", r.points},       {"truth", r.truth},     {"pointwise", r.pointwise},
            {"pointwise_mean", r.pointwise_mean}, {"pointwise_min", r.pointwise_min}, {"uniform", r.uniform},
            {"mc_se", r.mc_se},         {"reps", r.reps},       {"failed_reps", r.failed_reps},
            {"nominal", r.nominal}};
}

json to_json(const ComplianceShares& s) {
    return {{"complier", s.complier},           {"defier", s.defier},         {"complier_total", s.complier_total},
            {"defier_total", s.defier_total},   {"complier_se", s.complier_se}, {"defier_se", s.defier_se},
            {"diff_se", s.diff_se},             {"exchangeable", s.exchangeable}, {"n", s.n}};
}

BasisSpec basis_from_json(const json& j, const std::vector<std::string>& columns) {
    BasisSpec b;
    try {
        std::vector<std::string> cov = columns;
        if (j.contains("covariates")) cov = j.at("covariates").get<std::vector<std::string>>();
        for (const auto& c : cov) {
            auto it = std::find(columns.begin(), columns.end(), c);
            if (it == columns.end()) throw ConfigError("basis covariate '" + c + "' is not a covariate column");
            b.covariates.push_back(static_cast<std::size_t>(it - columns.begin()));
        }
        b.degree = get_or(j, "degree", 1);
        b.intercept = get_or(j, "intercept", true);
        b.interact_d_x = get_or(j, "interact_d_x", false);
        const auto zm = get_or<std::string>(j, "z_mode", "saturated");
        if (zm == "none")
            b.z_mode = ZMode::None;
        else if (zm == "additive")
            b.z_mode = ZMode::Additive;
        else if (zm == "saturated")
            b.z_mode = ZMode::Saturated;
        else
            throw ConfigError("basis.z_mode must be none|additive|saturated");
    } catch (const json::exception& e) {
        throw ConfigError(std::string("basis: ") + e.what());
    }
    if (b.degree < 1) throw ConfigError("basis.degree must be >= 1");
    return b;
}

json to_json(const BasisSpec& b, const std::vector<std::string>& columns) {
    std::vector<std::string> cov;
    for (std::size_t c : b.covariates) cov.push_back(c < columns.size() ? columns[c] : "x" + std::to_string(c + 1));
    return {{"covariates", cov},
            {"degree", b.degree},
            {"intercept", b.intercept},
            {"interact_d_x", b.interact_d_x},
            {"z_mode", z_mode_name(b.z_mode)}};
}

void write_band_csv(const BandResult& b, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    out << "u,estimate,lo_pt,hi_pt,lo_unif,hi_unif\n";
    char buf[256];
    for (std::size_t k = 0; k < b.u.size(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", b.u[k], b.estimate[k], b.lo_pt[k],
                      b.hi_pt[k], b.lo_unif[k], b.hi_unif[k]);
        out << buf;
    }
}

void write_json(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    out << j.dump(2) << '\n';
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

json manifest(const std::string& command, const json& resolved_config, std::uint64_t seed) {
    std::ostringstream hash;
    hash << std::hex << std::setw(16) << std::setfill('0') << fnv1a(resolved_config.dump());
    const ClampCounts cc = clamp_counts();
    return {{"command", command},
            {"version", COPIV_VERSION},
            {"seed", seed},
            {"config_hash", hash.str()},
            {"config", resolved_config},
            {"clamp_events", {{"prob", cc.prob}, {"corr", cc.corr}}}};
}

}  // namespace copiv
