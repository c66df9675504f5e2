#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "copiv/dataset.hpp"

namespace copiv {

struct SolverDiagnostics {
    int iterations = 0;
    double residual = 0.0;            // sup-norm of the final residual
    // Jacobian of the cell probabilities in (F, rho), rows ordered by decreasing
    // cell propensity; positive principal minors make it a P-matrix.
    std::array<double, 4> jacobian{};
    double jacobian_det = 0.0;
    bool p_matrix = false;
    bool grid_fallback = false;
    bool boundary = false;            // rho reached the clamp 1 - 1e-8
    std::vector<double> path;         // homotopy parameter values reached
};

struct IdentSolution {
    double F = 0.0;
    double rho = 0.0;
    SolverDiagnostics diag;
};

// Binary treatment. p[z] = P(Y <= y, D = d | Z = z), pi[z] = P(D = 1 | Z = z).
IdentSolution solve_binary(int d, std::array<double, 2> p, std::array<double, 2> pi);

// Ordered treatment, level d. g[z] = P(Y <= y, D = d | Z = z), lower[z] =
// F_{D|Z}(d-1 | z), upper[z] = F_{D|Z}(d | z) (lower = 0 for d = 1, upper = 1 for d = K).
IdentSolution solve_ordered(std::array<double, 2> g, std::array<double, 2> lower, std::array<double, 2> upper);

struct ContinuousSolution {
    double F = 0.0;
    double rho = 0.0;
    double a = 0.0;   // single-index intercept
    double b = 0.0;   // single-index slope
};

// Continuous treatment from F_{Y|D,Z}(y|d,z) and F_{D|Z}(d|z), z = 0, 1.
ContinuousSolution solve_continuous(double FyDZ0, double FyDZ1, double FD0, double FD1);
// Same from the normal scores s_z = Phi^-1 F_{Y|D,Z}, t_z = Phi^-1 F_{D|Z}.
ContinuousSolution solve_continuous_index(double s0, double s1, double t0, double t1, double min_contrast = 1e-6);

struct SpearmanSolution {
    double F = 0.0;
    double rho = 0.0;
    double rho_z0 = 0.0, rho_z1 = 0.0;
};
SpearmanSolution solve_continuous_spearman(double FyDZ0, double FyDZ1, double FD0, double FD1);

struct MultiIVSolution {
    double F = 0.0;
    double rho0 = 0.0;                   // status-quo pair (cells 0 and 1)
    std::vector<double> rho;             // per cell
    std::vector<double> F_discrepancy;   // F from pair (0, c) minus F, NaN if not solvable
    std::vector<double> rho_discrepancy;
};
// Several binary instruments; cells are coded with the last instrument as the
// least significant bit, so cells 0 and 1 form the status-quo pair.
MultiIVSolution solve_multi_iv(int d, const std::vector<double>& p, const std::vector<double>& pi);

enum class AltSystem { WithinLevels, BetweenLevels };

struct AltInputs {
    // WithinLevels: first[z] = P(Y<=y, D=1|z), second[z] = P(Y<=y', D=1|z).
    // BetweenLevels: first[z] = P(Y<=y, D=1|z), second[z] = P(Y<=y, D=0|z).
    std::array<double, 2> first{}, second{};
    std::array<double, 2> pi{};          // P(D=1|z)
};

struct AltSolution {
    double F_first = 0.0;    // F(y) or F_{Y_1}(y)
    double F_second = 0.0;   // F(y') or F_{Y_0}(y)
    double rho_z0 = 0.0, rho_z1 = 0.0;
    double residual = 0.0;
    double jacobian_det = 0.0;
    bool rank_warning = false;
    int restarts = 0;
};
AltSolution solve_alt_system(AltSystem kind, const AltInputs& in, std::uint64_t seed = 1);

// Testable conditions on the first stage.
struct AssumptionReport {
    TreatmentKind kind = TreatmentKind::Binary;
    std::vector<double> points;          // d values checked
    std::vector<double> F0, F1;          // F_{D|Z}(d|0), F_{D|Z}(d|1)
    double min_gap = 0.0;                // min |F1 - F0|
    double min_probit_gap = 0.0;         // min |Phi^-1 F1 - Phi^-1 F0|
    bool rel_ok = false;
    int uoc_direction = 0;               // +1: F(d|0) > F(d|1) for all d; -1 reverse; 0 mixed
    std::vector<double> uoc_violations;  // d values against the majority direction
    bool uoc_ok = true;
    std::vector<double> overid_F;        // multi-IV: F discrepancy per non-status-quo cell and y
    double overid_max = 0.0;
    double overid_bootstrap_sd = 0.0;
    std::vector<std::string> messages;
    bool ok() const { return rel_ok && uoc_ok; }
};

// thresholds[l][z] = F_{D|Z}(level l+1 | z), l = 0..K-2.
AssumptionReport check_assumptions(const std::vector<std::array<double, 2>>& thresholds, TreatmentKind kind);

struct CheckOptions {
    std::vector<double> d_grid;          // continuous: evaluation points (default: 9 deciles)
    int instruments = 1;
    std::vector<double> y_grid;          // multi-IV over-identification (default: 9 deciles of Y)
    int bootstrap = 200;
    std::uint64_t seed = 1;
    double rel_tol = 1e-6;
};
AssumptionReport check_assumptions(const Dataset& data, TreatmentKind kind, const CheckOptions& opt = {});

}  // namespace copiv
