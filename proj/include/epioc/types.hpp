#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace epioc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Bad input: malformed config, missing or out-of-range parameter.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite state or step-size underflow during integration.
class IntegrationError : public std::runtime_error {
public:
    IntegrationError(const std::string& what, double t)
        : std::runtime_error(what + " at t=" + std::to_string(t)), t_(t) {}
    double time() const { return t_; }

private:
    double t_;
};

/// Iterative solver gave up (Newton, sweep, line search).
class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Bound {
    double lo = 0.0;
    double hi = 1.0;
};

inline double clamp(double v, const Bound& b) {
    return v < b.lo ? b.lo : (v > b.hi ? b.hi : v);
}

inline bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace epioc
