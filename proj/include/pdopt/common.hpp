#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace pdopt {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Thrown when an operation is requested from an object that cannot
/// perform it (e.g. a prox of a logistic oracle), as opposed to a
/// plain argument error.
class CapabilityError : public std::runtime_error {
 public:
    explicit CapabilityError(const std::string& what)
        : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace pdopt
