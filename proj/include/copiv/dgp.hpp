#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "copiv/dataset.hpp"

namespace copiv {

// Law of the standardized outcome U = Y_d - loc(d) - theta'x.
struct Marginal {
    enum class Kind { Gaussian, Step };
    Kind kind = Kind::Gaussian;
    double mean = 0.0, sd = 1.0;          // Gaussian
    std::vector<double> atoms, probs;     // Step: atoms ascending, probabilities sum to 1

    double cdf(double u) const;
    double cdf_left(double u) const;      // P(U < u)
    double quantile(double p) const;      // inf{u : G(u) >= p}
    std::vector<double> atom_points() const;
    double lo() const;                    // support range used by samplers and integrators
    double hi() const;

    static Marginal gaussian(double mean = 0.0, double sd = 1.0);
    // Equiprobable atoms a (s + 1(s>0)/2) + b, s in {-1, 0, 1}, with a, b set
    // for mean 0 and variance 1.
    static Marginal three_atom();
    static Marginal step(std::vector<double> atoms, std::vector<double> probs);
};

// Local dependence rho(u) between the standardized outcome and V.
struct RhoCurve {
    enum class Kind { Constant, Bump, Tanh };
    Kind kind = Kind::Constant;
    double value = 0.0;                              // Constant
    double center = 1.0, width = 0.6, base = 0.0;    // Bump: phi((u-center)/width) - base
    double alpha = 0.0, beta = 0.0;                  // Tanh: tanh(alpha + beta u)

    double operator()(double u) const;
    static RhoCurve constant(double r);
    // phi(5(u-1)/3) - phi(5/3).
    static RhoCurve bump();
};

struct OutcomeLaw {
    Marginal marginal;
    RhoCurve rho;
    double loc0 = 0.0;            // loc(d) = loc0 + loc1 * d
    double loc1 = 0.0;
    std::vector<double> theta;    // covariate shifts, one per covariate

    double loc(double d) const { return loc0 + loc1 * d; }
};

struct SelectionLaw {
    TreatmentKind kind = TreatmentKind::Binary;
    // Binary: pi[0][z] = P(D=1 | Z=z) (cell code z for several instruments).
    // Ordered: pi[d-1][z] = F_{D|Z}(d | z), d = 1..K-1, increasing in d.
    std::vector<std::vector<double>> pi;
    // Continuous: D = mu[z] + kappa'x + sd * Phi^-1(V).
    std::vector<double> mu;
    double sd = 1.0;
    std::vector<double> kappa;    // covariate index shifts, one per covariate
    double rho_v = 1.0;           // Gaussian copula of (V0, V1); 1 is rank invariance

    int levels() const;           // K (2 for binary)
    int cells() const;            // number of instrument cells
    // F_{D|Z,X}(d | z, xb) with xb = kappa'x; binary uses D=1 as the lower cell.
    double cdf(double d, int z, double xb) const;
    // Threshold F_{D|Z,X}(level | z) for discrete kinds, level = 0..K.
    double threshold(int level, int z, double xb) const;
    double draw(double v, int z, double xb) const;
};

struct DgpSpec {
    OutcomeLaw outcome;
    SelectionLaw selection;
    int covariates = 0;           // X_j iid N(0, 1)
    double p_z = 0.5;             // P(Z_j = 1) for each binary instrument
    int instruments = 1;

    void validate() const;
};

struct SimulatedData {
    Dataset data;
    // Latent panel, filled when requested.
    std::vector<double> v0, v1, d0, d1;
};

SimulatedData simulate(const DgpSpec& spec, std::size_t n, std::uint64_t seed, int threads = 1,
                       bool keep_latent = false);

// Potential-outcome CDF F_{Y_d}(y) (integrated over the covariate law).
double true_cdf(const DgpSpec& spec, double d, double y);
// Conditional F_{Y_d | X}(y | x).
double true_cdf_given_x(const DgpSpec& spec, double d, double y, const std::vector<double>& x);
// rho_{Y_d}(y) given X = x.
double true_rho(const DgpSpec& spec, double d, double y, const std::vector<double>& x);
// inf{y : F_{Y_d}(y) >= tau}.
double true_qsf(const DgpSpec& spec, double d, double tau);
double true_mean(const DgpSpec& spec, double d);

// Observable probabilities at a point, conditional on X = x.
struct ObservableCdfs {
    double joint = 0.0;    // binary/ordered: P(Y <= y, D = d | Z = z); continuous: F_{Y|D,Z}(y | d, z)
    double treatment = 0.0;  // binary: P(D=1|z); ordered: F_{D|Z}(d|z); continuous: F_{D|Z}(d|z)
};
ObservableCdfs observable_cdfs(const DgpSpec& spec, double y, double d, int z, const std::vector<double>& x = {});

// P(Y_d <= y, V <= v) integrated from the conditional law F_{Y_d|V} by quadrature.
double joint_cdf_quadrature(const OutcomeLaw& law, double d, double y, double v);

// E[U | V <= pi] with U = Y_d - E[Y_d], by quadrature over the joint CDF.
double control_function(const OutcomeLaw& law, double pi);
// Closed form for a Gaussian law with constant rho and unit scale.
double control_function_gaussian(double rho, double pi);

struct ComplianceShares {
    std::vector<double> complier;      // P(C_j), j = 1..K-1
    std::vector<double> defier;        // P(B_j)
    double complier_total = 0.0, defier_total = 0.0;
    double complier_se = 0.0, defier_se = 0.0, diff_se = 0.0;
    bool exchangeable = true;
    std::size_t n = 0;
};
ComplianceShares compliance_shares(const DgpSpec& spec, std::size_t n, std::uint64_t seed, int threads = 1);

// Maximal decrease of the conditional CDF F_{Y|V}(. | v) over the inversion grid;
// zero for laws that are 2-increasing.
double validity_defect(const OutcomeLaw& law);

}  // namespace copiv
