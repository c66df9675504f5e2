#include "doctest.h"

#include <cmath>
#include <numeric>

#include "copiv/dgp.hpp"
#include "copiv/errors.hpp"
#include "oracles.hpp"

using namespace copiv;

namespace {

DgpSpec binary_spec(double rho, std::vector<double> pi = {0.3, 0.6}) {
    DgpSpec s;
    s.selection.kind = TreatmentKind::Binary;
    s.selection.pi = {pi};
    s.outcome.rho = RhoCurve::constant(rho);
    s.outcome.loc1 = 1.0;
    return s;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

}  // namespace

TEST_SUITE("dgp") {

TEST_CASE("marginals") {
    const Marginal g = Marginal::gaussian(0.5, 2.0);
    CHECK(g.cdf(0.5) == doctest::Approx(0.5));
    CHECK(g.cdf(2.5) == doctest::Approx(oracle::Phi(1.0)).epsilon(1e-14));
    CHECK(g.quantile(oracle::Phi(-1.3)) == doctest::Approx(0.5 - 2.6).epsilon(1e-10));

    const Marginal t = Marginal::three_atom();
    double m = 0, v = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        m += t.probs[i] * t.atoms[i];
        v += t.probs[i] * t.atoms[i] * t.atoms[i];
    }
    CHECK(std::abs(m) < 1e-14);
    CHECK(v == doctest::Approx(1.0).epsilon(1e-14));
    // gaps between atoms are in ratio 1 : 1.5
    CHECK((t.atoms[2] - t.atoms[1]) / (t.atoms[1] - t.atoms[0]) == doctest::Approx(1.5));
    CHECK(t.cdf(t.atoms[1]) == doctest::Approx(2.0 / 3));
    CHECK(t.cdf_left(t.atoms[1]) == doctest::Approx(1.0 / 3));
    CHECK(t.quantile(0.5) == t.atoms[1]);
    CHECK(t.quantile(1.0 / 3) == t.atoms[0]);

    CHECK_THROWS_AS(Marginal::step({1, 0}, {0.5, 0.5}), DomainError);
    CHECK_THROWS_AS(Marginal::step({0, 1}, {0.4, 0.5}), DomainError);
}

TEST_CASE("rho curves") {
    const RhoCurve b = RhoCurve::bump();
    CHECK(b(1.0) == doctest::Approx(oracle::phi(0) - oracle::phi(5.0 / 3)));
    CHECK(std::abs(b(0.0)) < 1e-15);
    CHECK(std::abs(b(2.0)) < 1e-15);
    CHECK(b(1.3) == doctest::Approx(oracle::phi(0.5) - oracle::phi(5.0 / 3)));
    CHECK(RhoCurve::constant(-0.2)(7.0) == -0.2);
}

TEST_CASE("validation") {
    DgpSpec s = binary_spec(0.2);
    CHECK_NOTHROW(s.validate());
    s.selection.pi = {{0.3, 1.0}};
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s = binary_spec(0.2);
    s.instruments = 2;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.selection.pi = {{0.2, 0.3, 0.4, 0.5}};
    CHECK_NOTHROW(s.validate());
    DgpSpec o;
    o.selection.kind = TreatmentKind::Ordered;
    o.selection.pi = {{0.3, 0.2}, {0.25, 0.6}};
    CHECK_THROWS_AS(o.validate(), ConfigError);
    DgpSpec c;
    c.selection.kind = TreatmentKind::Continuous;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("simulation is reproducible and thread invariant") {
    const DgpSpec s = binary_spec(0.5);
    const SimulatedData a = simulate(s, 3000, 42, 1);
    const SimulatedData b = simulate(s, 3000, 42, 4);
    CHECK(a.data.y == b.data.y);
    CHECK(a.data.d == b.data.d);
    CHECK(a.data.z == b.data.z);
    const SimulatedData c = simulate(s, 3000, 43, 1);
    CHECK(a.data.y != c.data.y);
}

TEST_CASE("simulated cells match the observable probabilities") {
    const DgpSpec s = binary_spec(0.5);
    const std::size_t n = 200000;
    const SimulatedData sim = simulate(s, n, 7, 4);
    const double y = 0.8;
    for (int z = 0; z < 2; ++z) {
        double nz = 0, joint = 0, treated = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (sim.data.z[i] != z) continue;
            ++nz;
            treated += sim.data.d[i] == 1.0;
            joint += sim.data.d[i] == 1.0 && sim.data.y[i] <= y;
        }
        const ObservableCdfs o = observable_cdfs(s, y, 1.0, z);
        CHECK(o.treatment == doctest::Approx(s.selection.pi[0][z]));
        // Y_1 ~ N(1, 1): joint = C(F, pi; rho)
        const double ref = oracle::gauss_copula(oracle::Phi(y - 1.0), s.selection.pi[0][z], 0.5);
        CHECK(o.joint == doctest::Approx(ref).epsilon(1e-10));
        CHECK(std::abs(treated / nz - o.treatment) < 4 * std::sqrt(0.25 / nz));
        CHECK(std::abs(joint / nz - o.joint) < 4 * std::sqrt(0.25 / nz));
    }
}

TEST_CASE("truth functions for a Gaussian law") {
    DgpSpec s = binary_spec(0.4);
    CHECK(true_cdf(s, 1.0, 1.7) == doctest::Approx(oracle::Phi(0.7)).epsilon(1e-10));
    CHECK(true_cdf(s, 0.0, 0.2) == doctest::Approx(oracle::Phi(0.2)).epsilon(1e-10));
    CHECK(true_qsf(s, 1.0, 0.25) == doctest::Approx(1.0 + oracle::Phi_inv(0.25)).epsilon(1e-8));
    CHECK(true_mean(s, 1.0) == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(true_rho(s, 1.0, 0.3, {}) == doctest::Approx(0.4));

    // Covariate shift integrates to N(loc, 1 + theta^2).
    s.covariates = 1;
    s.outcome.theta = {0.75};
    s.selection.kappa = {0.0};
    CHECK(true_cdf(s, 1.0, 2.0) == doctest::Approx(oracle::Phi(1.0 / std::sqrt(1.5625))).epsilon(1e-7));
    CHECK(true_cdf_given_x(s, 1.0, 2.0, {0.4}) == doctest::Approx(oracle::Phi(1.0 - 0.3)).epsilon(1e-10));
}

TEST_CASE("joint CDF quadrature agrees with the Gaussian copula") {
    OutcomeLaw law;
    law.rho = RhoCurve::constant(-0.35);
    for (double y : {-1.2, 0.0, 0.9})
        for (double v : {0.15, 0.5, 0.8}) {
            const double ref = oracle::gauss_copula(oracle::Phi(y), v, -0.35);
            CHECK(std::abs(joint_cdf_quadrature(law, 0.0, y, v) - ref) < 1e-8);
        }
}

TEST_CASE("control function") {
    // E[U | V <= pi] = -rho phi(Phi^-1 pi) / pi
    for (double r : {-0.6, 0.3})
        for (double p : {0.05, 0.4, 0.9}) {
            const double ref = -r * oracle::phi(oracle::Phi_inv(p)) / p;
            CHECK(control_function_gaussian(r, p) == doctest::Approx(ref).epsilon(1e-12));
            OutcomeLaw law;
            law.rho = RhoCurve::constant(r);
            CHECK(std::abs(control_function(law, p) - ref) < 1e-10);
        }
}

TEST_CASE("compliance shares") {
    DgpSpec s = binary_spec(0.3);
    const ComplianceShares rank = compliance_shares(s, 100000, 3);
    CHECK(rank.defier_total == 0.0);
    CHECK(rank.complier_total == doctest::Approx(0.3).epsilon(0.02));

    s.selection.rho_v = 0.5;
    const ComplianceShares mix = compliance_shares(s, 200000, 3, 4);
    CHECK(mix.defier_total > 0.0);
    CHECK(mix.complier_total - mix.defier_total == doctest::Approx(0.3).epsilon(0.03));
    CHECK(mix.diff_se > 0.0);

    DgpSpec c;
    c.selection.kind = TreatmentKind::Continuous;
    c.selection.mu = {0, 1};
    CHECK_THROWS_AS(compliance_shares(c, 10, 1), DomainError);
}

TEST_CASE("continuous selection") {
    DgpSpec s;
    s.selection.kind = TreatmentKind::Continuous;
    s.selection.mu = {0.0, 1.0};
    s.outcome.rho = RhoCurve::constant(0.5);
    s.outcome.loc1 = 1.0;
    const SimulatedData sim = simulate(s, 50000, 11, 4, true);
    std::vector<double> d1;
    for (std::size_t i = 0; i < sim.data.n(); ++i)
        if (sim.data.z[i] == 1) d1.push_back(sim.data.d[i]);
    CHECK(mean(d1) == doctest::Approx(1.0).epsilon(0.03));
    CHECK(s.selection.cdf(1.0, 0, 0.0) == doctest::Approx(oracle::Phi(1.0)));
    const ObservableCdfs o = observable_cdfs(s, 0.7, 0.4, 1);
    const double F = oracle::Phi(0.7 - 0.4), v = oracle::Phi(0.4 - 1.0);
    const double ref = oracle::Phi((oracle::Phi_inv(F) - 0.5 * oracle::Phi_inv(v)) / std::sqrt(0.75));
    CHECK(o.joint == doctest::Approx(ref).epsilon(1e-9));
    CHECK(o.treatment == doctest::Approx(v));
    CHECK(sim.v0.size() == sim.data.n());
}

TEST_CASE("validity defect") {
    OutcomeLaw g;
    g.rho = RhoCurve::constant(0.7);
    CHECK(validity_defect(g) == 0.0);
    OutcomeLaw b;
    b.rho = RhoCurve::bump();
    // The bump law fails 2-increasingness in the far tails of V; the defect is small but real.
    const double defect = validity_defect(b);
    CHECK(defect > 0.0);
    CHECK(defect < 0.01);
}

}
