#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "copiv/dataset.hpp"
#include "copiv/dgp.hpp"
#include "copiv/estimate.hpp"

namespace copiv {

enum class BootScheme { Empirical, Multiplier };
std::string to_string(BootScheme s);
BootScheme boot_scheme_from_string(const std::string& s);

// Estimator + functional closure. Empirical replicates pass a resampled dataset and
// empty weights; multiplier replicates pass the original data and unit-mean
// exponential weights.
using Pipeline = std::function<std::vector<double>(const Dataset&, const Eigen::VectorXd&)>;

struct BootstrapOptions {
    int B = 5000;
    BootScheme scheme = BootScheme::Empirical;
    std::uint64_t seed = 1;
    int threads = 1;
    double max_fail = 0.05;
};

struct BootstrapDraws {
    Eigen::MatrixXd draws;               // successful replicates x |U|
    std::vector<int> replicate;          // replicate index of each row
    std::size_t dropped = 0;
    std::vector<std::string> failures;   // first few failure messages
};

BootstrapDraws bootstrap(const Dataset& data, const Pipeline& pipeline, const BootstrapOptions& opt);

struct RobustSE {
    double se = 0.0;
    bool degenerate = false;             // fewer than two distinct draws
};
// (Q_0.75 - Q_0.25) / (Phi^-1(0.75) - Phi^-1(0.25)), type-7 quartiles.
RobustSE robust_se(std::vector<double> draws);

struct BandResult {
    std::vector<double> u;
    std::vector<double> estimate;
    std::vector<double> se;
    std::vector<double> cv_pointwise;
    double cv_uniform = 0.0;
    std::vector<double> lo_pt, hi_pt, lo_unif, hi_unif;
    std::size_t zero_se = 0;             // points excluded from the uniform max
    double alpha = 0.1;
    int B = 0;
    BootScheme scheme = BootScheme::Empirical;
    std::uint64_t seed = 0;
    Eigen::MatrixXd draws;               // kept on request
};

// Critical values use the order statistic k = ceil((1 - alpha)(B + 1)), clamped to [1, B].
double order_quantile(std::vector<double> v, double level);
BandResult bands(const std::vector<double>& u, const std::vector<double>& estimate, const Eigen::MatrixXd& draws,
                 double alpha);

enum class Functional { Cdf, Qsf, Qte, Asf, Ate };
std::string to_string(Functional f);
Functional functional_from_string(const std::string& s);

// Functional over a set of points u: Cdf -> y values at d; Qsf/Qte -> tau values;
// Asf -> d values; Ate -> single pair (d, d2).
struct FunctionalSpec {
    Functional kind = Functional::Cdf;
    double d = 0.0, d2 = 1.0;
    std::vector<double> points;
    bool interpolate = true;
};
std::vector<double> evaluate_functional(const PotentialOutcomeFit& fit, const FunctionalSpec& spec);
// Treatment values the functional reads; a continuous fit needs them in its d grid.
std::vector<double> functional_levels(const FunctionalSpec& spec);
std::vector<double> true_functional(const DgpSpec& dgp, const FunctionalSpec& spec);

struct CoverageOptions {
    std::size_t n = 1000;
    int reps = 200;
    int B = 299;
    double alpha = 0.1;
    std::uint64_t seed = 1;
    BootScheme scheme = BootScheme::Empirical;
    int threads = 1;
    double budget = 1e11;                // upper bound on reps * B * n
    bool exogenous_baseline = false;     // use fit_exogenous_dr instead of the IV estimator
};

struct CoverageReport {
    std::vector<double> points, truth;
    std::vector<double> pointwise;       // per-point coverage frequency
    double pointwise_mean = 0.0;
    double pointwise_min = 0.0;
    double uniform = 0.0;
    double mc_se = 0.0;                  // binomial standard error at the mean coverage
    int reps = 0;
    int failed_reps = 0;
    double nominal = 0.9;
};

CoverageReport coverage_study(const DgpSpec& dgp, TreatmentKind kind, const EstimateOptions& est,
                              const FunctionalSpec& target, const CoverageOptions& opt);

}  // namespace copiv
