#include "doctest.h"

#include <array>
#include <cmath>
#include <vector>

#include "copiv/dataset.hpp"
#include "copiv/dgp.hpp"
#include "copiv/errors.hpp"
#include "copiv/ident.hpp"
#include "oracles.hpp"

using namespace copiv;

namespace {

// Forward maps evaluated with the quadrature oracle, not the library copula.
double Cg(double u, double v, double r) { return oracle::gauss_copula(u, v, r); }

double cond_cdf(double F, double v, double r) {
    return oracle::Phi((oracle::Phi_inv(F) - r * oracle::Phi_inv(v)) / std::sqrt(1.0 - r * r));
}

}  // namespace

TEST_SUITE("ident") {

TEST_CASE("binary: independence gives the cell ratio") {
    const IdentSolution s = solve_binary(1, {0.4 * 0.3, 0.4 * 0.6}, {0.3, 0.6});
    CHECK(s.F == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(std::abs(s.rho) < 1e-10);
}

TEST_CASE("binary: forward/inverse on a lattice, both levels") {
    double worst = 0.0;
    int n = 0;
    for (double F = 0.1; F < 0.95; F += 0.2)
        for (double r = -0.7; r < 0.75; r += 0.35)
            for (int d = 0; d < 2; ++d) {
                const std::array<double, 2> pi{0.3, 0.65};
                std::array<double, 2> p;
                for (int z = 0; z < 2; ++z) p[z] = d == 1 ? Cg(F, pi[z], r) : F - Cg(F, pi[z], r);
                const IdentSolution s = solve_binary(d, p, pi);
                worst = std::max({worst, std::abs(s.F - F), std::abs(s.rho - r)});
                if (d == 1) CHECK(s.diag.p_matrix);
                ++n;
            }
    CHECK(n == 50);
    CHECK(worst < 1e-8);
}

TEST_CASE("binary: worked example and errors") {
    const std::array<double, 2> pi{0.3, 0.6};
    const IdentSolution s = solve_binary(1, {Cg(0.4, 0.3, 0.3), Cg(0.4, 0.6, 0.3)}, pi);
    CHECK(std::abs(s.F - 0.4) < 1e-10);
    CHECK(std::abs(s.rho - 0.3) < 1e-10);
    CHECK_THROWS_AS(solve_binary(1, {0.2, 0.2}, {0.5, 0.5}), WeakInstrumentError);
    // p above min(F, pi) for every F: no copula reproduces it.
    CHECK_THROWS_AS(solve_binary(1, {0.35, 0.2}, {0.3, 0.6}), InfeasibleError);
}

TEST_CASE("ordered: interior level via homotopy") {
    const std::array<double, 2> lo{0.2, 0.35}, hi{0.6, 0.8};
    double worst = 0.0;
    for (double F = 0.1; F < 0.95; F += 0.2)
        for (double r = -0.7; r < 0.75; r += 0.35) {
            std::array<double, 2> g;
            for (int z = 0; z < 2; ++z) g[z] = Cg(F, hi[z], r) - Cg(F, lo[z], r);
            const IdentSolution s = solve_ordered(g, lo, hi);
            worst = std::max({worst, std::abs(s.F - F), std::abs(s.rho - r)});
        }
    CHECK(worst < 1e-8);

    std::array<double, 2> g;
    for (int z = 0; z < 2; ++z) g[z] = Cg(0.5, hi[z], -0.4) - Cg(0.5, lo[z], -0.4);
    const IdentSolution s = solve_ordered(g, lo, hi);
    CHECK(std::abs(s.F - 0.5) < 1e-8);
    CHECK(std::abs(s.rho + 0.4) < 1e-8);
    CHECK_FALSE(s.diag.path.empty());
}

TEST_CASE("ordered: independence and dominance violation") {
    const std::array<double, 2> lo{0.2, 0.35}, hi{0.6, 0.8};
    const double F = 0.3;
    const IdentSolution s = solve_ordered({F * 0.4, F * 0.45}, lo, hi);
    CHECK(s.F == doctest::Approx(F).epsilon(1e-10));
    CHECK(std::abs(s.rho) < 1e-9);
    // lower thresholds shift one way, upper the other
    CHECK_THROWS_AS(solve_ordered({0.1, 0.1}, {0.2, 0.35}, {0.8, 0.6}), AssumptionError);
}

TEST_CASE("ordered: boundary levels reduce to the binary formulas") {
    const double F = 0.45, r = 0.25;
    const std::array<double, 2> hi{0.3, 0.5};
    std::array<double, 2> g;
    for (int z = 0; z < 2; ++z) g[z] = Cg(F, hi[z], r);
    const IdentSolution s = solve_ordered(g, {0.0, 0.0}, hi);
    CHECK(std::abs(s.F - F) < 1e-9);
    CHECK(std::abs(s.rho - r) < 1e-9);
}

TEST_CASE("continuous: closed form") {
    const ContinuousSolution c = solve_continuous(0.5, 0.6, 0.4, 0.7);
    CHECK(c.a == doctest::Approx(0.08253).epsilon(1e-4));
    CHECK(c.b == doctest::Approx(0.32574).epsilon(1e-4));
    CHECK(c.F == doctest::Approx(0.53128).epsilon(1e-4));
    CHECK(c.rho == doctest::Approx(-0.30973).epsilon(1e-4));
    // a = Phi^-1(F)/sqrt(1-rho^2), b = -rho/sqrt(1-rho^2)
    const double s = std::sqrt(1 - c.rho * c.rho);
    CHECK(std::abs(c.a - oracle::Phi_inv(c.F) / s) < 1e-12);
    CHECK(std::abs(c.b + c.rho / s) < 1e-12);

    const ContinuousSolution flat = solve_continuous(0.5, 0.5, 0.3, 0.6);
    CHECK(std::abs(flat.a) < 1e-15);
    CHECK(std::abs(flat.b) < 1e-15);
    CHECK(flat.F == doctest::Approx(0.5));
    CHECK(std::abs(flat.rho) < 1e-15);
}

TEST_CASE("continuous: forward/inverse") {
    double worst = 0.0;
    for (double F = 0.1; F < 0.95; F += 0.2)
        for (double r = -0.8; r < 0.85; r += 0.4) {
            const double v0 = 0.35, v1 = 0.7;
            const ContinuousSolution c = solve_continuous(cond_cdf(F, v0, r), cond_cdf(F, v1, r), v0, v1);
            worst = std::max({worst, std::abs(c.F - F), std::abs(c.rho - r)});
        }
    CHECK(worst < 1e-10);
    CHECK_THROWS_AS(solve_continuous(0.4, 0.5, 0.5, 0.5), WeakInstrumentError);
}

TEST_CASE("continuous: local Spearman route") {
    auto w = [](double p) { return (1 - 2 * p) / std::sqrt(p * (1 - p)); };
    auto fwd = [&](double F, double r, double v) { return F + 0.5 * r * std::sqrt(F * (1 - F)) * w(v); };
    const SpearmanSolution s = solve_continuous_spearman(fwd(0.5, 0.4, 0.3), fwd(0.5, 0.4, 0.6), 0.3, 0.6);
    CHECK(std::abs(s.F - 0.5) < 1e-10);
    CHECK(std::abs(s.rho - 0.4) < 1e-10);
    // FD0 + FD1 = 1 gives w0 = -w1, still well posed.
    const SpearmanSolution t = solve_continuous_spearman(fwd(0.5, 0.4, 0.3), fwd(0.5, 0.4, 0.7), 0.3, 0.7);
    CHECK(std::abs(t.rho - 0.4) < 1e-10);
    CHECK_THROWS_AS(solve_continuous_spearman(0.4, 0.45, 0.3, 0.3), WeakInstrumentError);
    const SpearmanSolution flat = solve_continuous_spearman(0.42, 0.42, 0.3, 0.6);
    CHECK(flat.F == doctest::Approx(0.42));
    CHECK(std::abs(flat.rho) < 1e-12);
}

TEST_CASE("multi-valued instrument") {
    const std::vector<double> pi{0.2, 0.35, 0.5, 0.7};
    std::vector<double> p;
    for (double q : pi) p.push_back(Cg(0.45, q, 0.3));
    const MultiIVSolution s = solve_multi_iv(1, p, pi);
    CHECK(std::abs(s.F - 0.45) < 1e-9);
    for (double r : s.rho) CHECK(std::abs(r - 0.3) < 1e-8);
    for (double e : s.F_discrepancy) CHECK(std::abs(e) < 1e-8);

    std::vector<double> ind;
    for (double q : pi) ind.push_back(0.45 * q);
    const MultiIVSolution i = solve_multi_iv(1, ind, pi);
    CHECK(i.F == doctest::Approx(0.45));
    for (double r : i.rho) CHECK(std::abs(r) < 1e-8);

    CHECK_THROWS(solve_multi_iv(1, {0.1, 0.1, 0.2, 0.3}, {0.3, 0.3, 0.5, 0.6}));
    CHECK_THROWS_AS(solve_multi_iv(1, {0.1, 0.2, 0.3}, {0.2, 0.4, 0.6}), DomainError);
}

TEST_CASE("alternative restriction systems") {
    AltInputs in;
    in.pi = {0.3, 0.7};
    const double F1 = 0.45, F0 = 0.55, r[2] = {0.2, -0.1};
    for (int z = 0; z < 2; ++z) {
        in.first[z] = Cg(F1, in.pi[z], r[z]);
        in.second[z] = F0 - Cg(F0, in.pi[z], r[z]);
    }
    const AltSolution s = solve_alt_system(AltSystem::BetweenLevels, in);
    CHECK(std::abs(s.F_first - F1) < 1e-8);
    CHECK(std::abs(s.F_second - F0) < 1e-8);
    CHECK(std::abs(s.rho_z0 - 0.2) < 1e-8);
    CHECK(std::abs(s.rho_z1 + 0.1) < 1e-8);

    AltInputs w;
    w.pi = {0.3, 0.7};
    for (int z = 0; z < 2; ++z) {
        w.first[z] = Cg(0.4, w.pi[z], 0.2);
        w.second[z] = Cg(0.4, w.pi[z], 0.2);
    }
    // F(y) = F(y'): the rank condition fails.
    CHECK(solve_alt_system(AltSystem::WithinLevels, w).rank_warning);

    AltInputs ind;
    ind.pi = {0.3, 0.7};
    for (int z = 0; z < 2; ++z) {
        ind.first[z] = 0.45 * ind.pi[z];
        ind.second[z] = 0.55 * (1 - ind.pi[z]);
    }
    const AltSolution si = solve_alt_system(AltSystem::BetweenLevels, ind);
    CHECK(si.F_first == doctest::Approx(0.45).epsilon(1e-8));
    CHECK(std::abs(si.rho_z0) < 1e-7);
}

TEST_CASE("assumption checks on thresholds") {
    const AssumptionReport ok = check_assumptions(std::vector<std::array<double, 2>>{{0.3, 0.2}, {0.7, 0.55}}, TreatmentKind::Ordered);
    CHECK(ok.ok());
    CHECK(ok.uoc_direction == 1);
    const AssumptionReport cross = check_assumptions(std::vector<std::array<double, 2>>{{0.3, 0.2}, {0.55, 0.7}}, TreatmentKind::Ordered);
    CHECK_FALSE(cross.uoc_ok);
    CHECK(cross.uoc_violations.size() == 1);
    const AssumptionReport flat = check_assumptions(std::vector<std::array<double, 2>>{{0.4, 0.4}}, TreatmentKind::Binary);
    CHECK_FALSE(flat.rel_ok);
}

TEST_CASE("assumption checks on data") {
    DgpSpec spec;
    spec.selection.kind = TreatmentKind::Continuous;
    spec.selection.mu = {0.0, 0.8};
    const SimulatedData sim = simulate(spec, 4000, 5);
    const AssumptionReport rep = check_assumptions(sim.data, TreatmentKind::Continuous);
    CHECK(rep.ok());
    REQUIRE(rep.points.size() == 9);
    for (std::size_t i = 0; i < rep.points.size(); ++i) CHECK(rep.F0[i] > rep.F1[i]);

    // Redundant instruments under full CI: discrepancy within a few bootstrap SDs.
    DgpSpec two;
    two.instruments = 2;
    two.outcome.rho = RhoCurve::constant(0.3);
    two.selection.pi = {{0.2, 0.4, 0.5, 0.7}};
    const SimulatedData s2 = simulate(two, 20000, 9);
    CheckOptions co;
    co.instruments = 2;
    co.bootstrap = 100;
    const AssumptionReport r2 = check_assumptions(s2.data, TreatmentKind::Binary, co);
    CHECK(r2.overid_bootstrap_sd > 0.0);
    CHECK(r2.overid_max < 4.0 * r2.overid_bootstrap_sd);
}

}
