#pragma once

#include <string>
#include <string_view>

namespace copiv {

enum class Family { Gaussian, Clayton, Frank, LocalSpearman };

std::string to_string(Family f);
Family family_from_string(std::string_view name);

// Copula C(u1, u2; rho) and its partial derivatives. Parameter domains:
// Gaussian |rho| < 1, Clayton rho >= -1, Frank any real, LocalSpearman such
// that C stays within the Frechet bounds at (u1, u2). rho == 0 is independence.
double C(Family f, double u1, double u2, double rho);
double C1(Family f, double u1, double u2, double rho);
double C2(Family f, double u1, double u2, double rho);
double Crho(Family f, double u1, double u2, double rho);

struct RhoSolution {
    double rho = 0.0;
    bool boundary = false;  // t sat on (or beyond the family's reach toward) a Frechet bound
    int iterations = 0;
};

// Unique rho with C(u1, u2; rho) = t. Throws InfeasibleError when t is outside
// the Frechet bounds by more than kFrechetSlack.
inline constexpr double kFrechetSlack = 1e-13;
RhoSolution solve_rho(Family f, double t, double u1, double u2);

// Parameter range explored by solve_rho.
struct ParamRange {
    double lo;
    double hi;
};
ParamRange param_range(Family f);

}  // namespace copiv
