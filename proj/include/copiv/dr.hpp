#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "copiv/dataset.hpp"

namespace copiv {

enum class ZMode { None, Additive, Saturated };

// Regressor basis. B(x) = [1, x_j, x_j^2, ...]; B(z,x) and B(d,z,x) add the
// instrument (additively or fully interacted) and the treatment.
struct BasisSpec {
    bool intercept = true;
    std::vector<std::size_t> covariates;  // columns of Dataset::x
    int degree = 1;
    bool interact_d_x = false;            // d * B(x) instead of d alone
    ZMode z_mode = ZMode::Saturated;

    Eigen::Index dim_x() const;
    Eigen::Index dim_zx() const;
    Eigen::Index dim_dx() const;
    Eigen::Index dim_dzx() const;

    Eigen::RowVectorXd row_x(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
    Eigen::RowVectorXd row_zx(double z, const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
    Eigen::RowVectorXd row_dx(double d, const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
    Eigen::RowVectorXd row_dzx(double d, double z, const Eigen::Ref<const Eigen::RowVectorXd>& x) const;

    Eigen::MatrixXd design_x(const Dataset& data) const;
    Eigen::MatrixXd design_zx(const Dataset& data) const;
    Eigen::MatrixXd design_dx(const Dataset& data) const;
    Eigen::MatrixXd design_dzx(const Dataset& data) const;

    std::vector<std::string> names_x() const;
    std::vector<std::string> names_zx() const;
    std::vector<std::string> names_dx() const;
    std::vector<std::string> names_dzx() const;

    void validate(const Dataset& data) const;
};

struct ProbitOptions {
    int max_iter = 50;
    int max_halvings = 30;
    double grad_tol = 1e-8;       // sup-norm of the gradient of the mean log-likelihood
    double separation_index = 8.0;
    bool check_rank = true;
};

struct ProbitResult {
    Eigen::VectorXd beta;
    bool converged = false;
    int iterations = 0;
    double grad_norm = 0.0;
    double loglik = 0.0;          // mean log-likelihood
    std::string message;
};

// Probit MLE by Newton-Raphson with step-halving. Throws SeparationError and
// RankDeficientError; non-convergence is reported in the result.
ProbitResult probit_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& weights = {},
                        const std::optional<Eigen::VectorXd>& start = std::nullopt, const ProbitOptions& opt = {},
                        const std::vector<std::string>& names = {});

void check_full_rank(const Eigen::MatrixXd& X, const std::vector<std::string>& names = {});

enum class DRSide { Outcome, Treatment };

struct GridDiagnostics {
    bool converged = true;
    bool flagged = false;
    int iterations = 0;
    double grad_norm = 0.0;
    std::string message;
};

// Probit distribution regression over a threshold grid. Outcome side: 1{Y<=y}
// on B(d,z,x). Treatment side: 1{D<=d} on B(z,x).
struct DRFit {
    DRSide side = DRSide::Outcome;
    BasisSpec basis;
    std::vector<double> grid;
    Eigen::MatrixXd coef;                 // grid.size() x p
    std::vector<GridDiagnostics> diagnostics;

    std::size_t flagged_count() const;
};

struct DROptions {
    ProbitOptions probit;
    bool reverse_sweep = false;           // warm-start from the top of the grid
    const DRFit* warm_start = nullptr;    // same side, basis and grid
    // Thresholds with too few observations on one side are flagged and interpolated
    // instead of rejected (bootstrap replicates keep the full-sample grid).
    bool flag_thin = false;
};

DRFit dr_fit(DRSide side, const Dataset& data, const BasisSpec& basis, const std::vector<double>& grid,
             const Eigen::VectorXd& weights = {}, const DROptions& opt = {});

// Monotone rearrangement (sorting) of a curve on its grid.
std::vector<double> rearrange(std::vector<double> values);

// Default grid: empirical quantiles at `count` equally spaced probabilities in [lo, hi].
std::vector<double> default_grid(const std::vector<double>& values, std::size_t count = 99, double lo = 0.01,
                                 double hi = 0.99);

}  // namespace copiv
