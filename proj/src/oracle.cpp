#include "ifstab/oracle.hpp"

#include <cmath>

namespace ifstab {

void OracleCase::validate() const {
    require(sigma1_sq >= 0.0 && sigma2_sq >= 0.0,
            "variances must be non-negative");
    require(d_bar > 0.0, "x1 second moment must be positive");
}

std::pair<double, double> oracle_erm_beta(const OracleCase& c) {
    c.validate();
    const double s = c.s();
    return {s / (s + 2.0), 2.0 / (s + 2.0)};
}

double oracle_v_erm(const OracleCase& c) {
    c.validate();
    const double gap = std::abs(c.sigma1_sq - c.sigma2_sq);
    if (gap == 0.0) return kNegInf;
    const double s = c.s();
    return 2.0 * std::log(2.0 * std::sqrt(2.0) * gap / ((s + 2.0) * (s + 2.0)));
}

IrmLimit oracle_irm_limit(const OracleCase& c) {
    c.validate();
    IrmLimit lim;
    lim.vacuous = c.sigma1_sq == c.sigma2_sq;
    return lim;
}

Eigen::Matrix2d oracle_erm_hessian(const OracleCase& c) {
    c.validate();
    const double d = c.d_bar;
    Eigen::Matrix2d h;
    h << 2.0 * d, 2.0 * d, 2.0 * d, 2.0 * d + c.s() + 2.0;
    return h;
}

}  // namespace ifstab
