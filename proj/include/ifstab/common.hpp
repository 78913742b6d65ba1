#pragma once

#include <Eigen/Dense>

#include <limits>
#include <stdexcept>
#include <string>

namespace ifstab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Invalid argument values or violated structural invariants.
class ParameterError : public std::runtime_error {
public:
    explicit ParameterError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed external input (files, configs).
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values produced where finite ones are required.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Hessian not positive definite even after damping.
class SingularHessianError : public std::runtime_error {
public:
    SingularHessianError(const std::string& what, double min_eigenvalue)
        : std::runtime_error(what), min_eigenvalue(min_eigenvalue) {}
    double min_eigenvalue;
};

// Fixed-width decimal rendering used by every CSV/JSON writer so that reruns
// are byte-identical.  -inf renders as the literal "-inf".
std::string format_number(double v);

void require(bool cond, const std::string& msg);

}  // namespace ifstab
