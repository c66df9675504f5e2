#pragma once

#include <Eigen/Dense>
#include <vector>

#include "copiv/dataset.hpp"
#include "copiv/estimate.hpp"

namespace copiv {

// F_{Y_d}(y) on the y grid for each fitted treatment value d.
struct MarginalCDF {
    std::vector<double> grid;
    std::vector<double> levels;
    Eigen::MatrixXd F;                   // levels x grid, monotone in y
    Extrapolation rule = Extrapolation::Step;

    std::size_t level_index(double d) const;
    // Off-grid evaluation: step uses the last grid value at or below y (0 below the
    // grid); linear interpolates and extrapolates the end segments, clipped to [0,1].
    double value(double d, double y) const;
    std::vector<double> curve(double d) const;
};

MarginalCDF marginalize(const PotentialOutcomeFit& fit);
MarginalCDF make_marginal(std::vector<double> grid, std::vector<double> levels, const Eigen::MatrixXd& F,
                          Extrapolation rule = Extrapolation::Step);

// inf{y in grid : F(y) >= tau}; with interpolate, the crossing is located linearly
// between the bracketing grid points. Throws BoundaryError when tau > F(y_max).
double qsf(const MarginalCDF& F, double d, double tau, bool interpolate = false);
double qte(const MarginalCDF& F, double tau, double d, double d2, bool interpolate = false);

struct AsfValue {
    double value = 0.0;
    // Bound on the mass outside the grid times its range: F(y_min) + 1 - F(y_max), scaled.
    double truncation_bound = 0.0;
};
// y_min + sum_j (1 - F(y_j)) (y_{j+1} - y_j).
AsfValue asf_detail(const MarginalCDF& F, double d);
double asf(const MarginalCDF& F, double d);
double ate(const MarginalCDF& F, double d, double d2);

struct CounterfactualCDF {
    std::vector<double> grid;
    std::vector<double> F;
    std::size_t clipped = 0;
    bool one_sided = false;              // Y_0 law taken from F_{Y|Z}(.|0)
};
// F_{Y_0|D}(y|1) = [F_{Y_0}(y) - (1 - pi) F_{Y|D}(y|0)] / pi, clipped to [0,1] and rearranged.
CounterfactualCDF treated_counterfactual(const std::vector<double>& grid, const std::vector<double>& F_Y0,
                                         const std::vector<double>& F_Y_given_D0, double pi);
// Sample version for a binary treatment. When nobody is treated at Z = 0, F_{Y_0}
// is replaced by the empirical F_{Y|Z}(.|0) (one-sided noncompliance).
CounterfactualCDF treated_counterfactual(const Dataset& data, const MarginalCDF& F);

struct LocalDependenceValue {
    double rho = 0.0;
    double F = 0.0;                      // averaged F_{Y_d|X}
    double joint = 0.0;                  // averaged C(F_{Y_d|X}, v; rho_{Y_d;X})
    bool boundary = false;
};
// Marginal local dependence: solves C(F, v; rho) = sum_r w_r C(F_r, v; rho_r).
LocalDependenceValue marginal_local_dependence(const std::vector<double>& F, const std::vector<double>& rho,
                                               const std::vector<double>& weights, double v);
LocalDependenceValue marginal_local_dependence(const PotentialOutcomeFit& fit, double v, double d, double y);

}  // namespace copiv
