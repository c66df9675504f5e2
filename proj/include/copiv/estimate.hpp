#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "copiv/dataset.hpp"
#include "copiv/dr.hpp"

namespace copiv {

enum class Extrapolation { Step, Linear };

struct EstimateOptions {
    BasisSpec basis;
    std::vector<double> y_grid;          // empty: default_grid(y)
    std::vector<double> d_grid;          // continuous evaluation points; empty: default_grid(d)
    ProbitOptions probit;
    double step2_grad_tol = 1e-6;
    double weak_contrast = 1e-4;         // continuous: minimal |t1 - t0|
    Eigen::VectorXd weights;             // observation weights (multiplier bootstrap); empty = 1
    int threads = 1;
    bool flag_thin = false;              // see DROptions::flag_thin
};

// Conditional curves for one treatment level (or one point of the D grid).
struct LevelFit {
    double d = 0.0;
    Eigen::MatrixXd beta, gamma;          // discrete kinds: y_grid x dim_x
    std::vector<GridDiagnostics> diag;    // per y
    std::vector<bool> flagged;            // per y
    // rows: covariate rows (one row when the basis has no covariates); cols: y grid.
    Eigen::MatrixXd F;                    // rearranged in y
    Eigen::MatrixXd F_raw;
    Eigen::MatrixXd rho;
    Eigen::MatrixXd a, b;                 // continuous single index
    std::vector<bool> row_ok;             // continuous: false where the first stage contrast is weak
    std::size_t flagged_count() const;
    std::size_t weak_rows() const;
};

struct PotentialOutcomeFit {
    TreatmentKind kind = TreatmentKind::Binary;
    BasisSpec basis;
    std::vector<double> y_grid;
    std::vector<LevelFit> levels;
    Eigen::MatrixXd x_rows;               // covariate rows behind LevelFit::F
    Eigen::VectorXd row_weights;          // sum to one
    Extrapolation extrapolation = Extrapolation::Step;
    // First stage: discrete kinds fit 1{level <= l} on B(z,x); continuous adds the outcome side.
    DRFit first_stage;
    std::optional<DRFit> outcome_stage;
    std::vector<std::string> warnings;

    const LevelFit& level(double d) const;
    std::size_t level_index(double d) const;
    // F_{Y_d|X}(y_j | x) and rho_{Y_d;X}(y_j; x) at an arbitrary covariate row (before rearrangement).
    double conditional_F(std::size_t level, std::size_t j, const Eigen::RowVectorXd& x) const;
    double conditional_rho(std::size_t level, std::size_t j, const Eigen::RowVectorXd& x) const;
};

// Discrete treatments share one Step-2 engine: the binary case is the ordered case
// with K = 2, level 1 = {D = 1} (the lower cell V <= pi) and level 2 = {D = 0}.
PotentialOutcomeFit fit_binary(const Dataset& data, const EstimateOptions& opt,
                               const PotentialOutcomeFit* warm = nullptr);
PotentialOutcomeFit fit_ordered(const Dataset& data, const EstimateOptions& opt,
                                const PotentialOutcomeFit* warm = nullptr);
PotentialOutcomeFit fit_continuous(const Dataset& data, const EstimateOptions& opt,
                                   const PotentialOutcomeFit* warm = nullptr);
PotentialOutcomeFit fit(TreatmentKind kind, const Dataset& data, const EstimateOptions& opt,
                        const PotentialOutcomeFit* warm = nullptr);

// Conditional-exogeneity baseline: probit DR of 1{Y <= y} on B(d,x), averaged over X.
// Levels are the support of D (discrete) or opt.d_grid (continuous); rho is zero.
PotentialOutcomeFit fit_exogenous_dr(const Dataset& data, TreatmentKind kind, const EstimateOptions& opt);

struct TslsResult {
    double coef = 0.0;                    // coefficient on D
    double se = 0.0;                      // heteroskedasticity-robust (HC1)
    double se_homoskedastic = 0.0;
    double first_stage_F = 0.0;
    bool weak = false;                    // first_stage_F < 10
    Eigen::VectorXd beta;                 // (1, D, X...)
};
TslsResult fit_2sls(const Dataset& data);

// Step-2 likelihood for one level and grid point, exposed for tests. Units carry
// an index row B(x), Phi^-1 of the cell thresholds (lo may be -inf, hi +inf) and
// the weights of observations with Y <= y and Y > y.
struct CellUnit {
    Eigen::Index row = 0;
    double lo = 0.0, hi = 0.0;
    double w_le = 0.0, w_gt = 0.0;
};
struct CellLikelihood {
    double value = 0.0;                   // sum of weighted log-likelihoods / total
    Eigen::VectorXd grad;
    Eigen::MatrixXd hess;
};
CellLikelihood cell_loglik(const Eigen::MatrixXd& B, const std::vector<CellUnit>& units, double total,
                           const Eigen::VectorXd& theta, bool derivatives = true);

}  // namespace copiv
