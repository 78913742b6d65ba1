#pragma once

#include "ifstab/common.hpp"

#include <utility>

namespace ifstab {

// One (sigma1^2, sigma2^2) instance of the two-domain structural model with
// population-level closed forms.  d_bar is the mean second moment of x1
// (1 for standard normal); it cancels out of beta and V but appears in the
// intermediate Hessian.
struct OracleCase {
    double sigma1_sq = 1.0;
    double sigma2_sq = 3.0;
    double d_bar = 1.0;

    double s() const { return sigma1_sq + sigma2_sq; }
    void validate() const;
};

// Population least-squares solution (s/(s+2), 2/(s+2)).
std::pair<double, double> oracle_erm_beta(const OracleCase& c);

// Population stability index for the ERM solution:
//   2 ln( 2 sqrt(2) |sigma1^2 - sigma2^2| / (s+2)^2 ),
// -inf sentinel when the variances coincide.
double oracle_v_erm(const OracleCase& c);

struct IrmLimit {
    Eigen::Vector2d beta{1.0, 0.0};
    double v = kNegInf;
    bool vacuous = false;  // equal variances: the limit says nothing
};

// The infinite-penalty limit: beta -> (1,0), V -> -inf.
IrmLimit oracle_irm_limit(const OracleCase& c);

// Population ERM Hessian [[2d, 2d], [2d, 2d+s+2]].
Eigen::Matrix2d oracle_erm_hessian(const OracleCase& c);

}  // namespace ifstab
