#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <vector>

namespace copiv {

enum class TreatmentKind { Binary, Ordered, Continuous };

std::string to_string(TreatmentKind k);
TreatmentKind treatment_from_string(const std::string& s);

// One row per observation. z holds the binary instrument, or the cell code
// (last instrument as least significant bit) when several are combined.
struct Dataset {
    std::vector<double> y;
    std::vector<double> d;
    std::vector<double> z;
    Eigen::MatrixXd x;  // n x k covariates

    std::size_t n() const { return y.size(); }
    std::size_t k() const { return static_cast<std::size_t>(x.cols()); }
    Dataset rows(const std::vector<std::size_t>& idx) const;
    void validate() const;
};

struct ColumnMap {
    std::string y = "y";
    std::string d = "d";
    std::string z = "z";
    std::vector<std::string> x;  // empty: every remaining column named x<j>
};

Dataset read_csv(const std::string& path, const ColumnMap& cols = {});
void write_csv(const Dataset& data, const std::string& path);

// Sorted distinct values.
std::vector<double> support(const std::vector<double>& v);
// Empirical quantiles (type 7) at probabilities p.
std::vector<double> empirical_quantiles(std::vector<double> v, const std::vector<double>& p);
// n equally spaced probabilities on [lo, hi].
std::vector<double> prob_grid(std::size_t n, double lo, double hi);

}  // namespace copiv
