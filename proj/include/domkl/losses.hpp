#pragma once

#include <concepts>
#include <string>

#include <Eigen/Dense>

#include "domkl/error.hpp"

namespace domkl {

/// A convex per-sample loss in the parameter vector. Anything satisfying
/// this can drive the iterative local step.
template <typename L>
concept ConvexLoss = requires(const L& loss, const Eigen::VectorXd& theta,
                              const Eigen::VectorXd& z, double y) {
    { loss.value(theta, z, y) } -> std::convertible_to<double>;
    { loss.gradient(theta, z, y) } -> std::convertible_to<Eigen::VectorXd>;
};

/// Regularized least squares: (y - theta'z)^2 + reg ||theta||^2.
struct QuadraticLoss {
    double reg = 0.01;

    explicit QuadraticLoss(double regularization = 0.01) : reg(regularization) {
        if (!(reg >= 0.0)) {
            throw ConfigError("regularization weight must be >= 0");
        }
    }

    double value(const Eigen::VectorXd& theta, const Eigen::VectorXd& z, double y) const {
        check(theta, z);
        const double residual = y - theta.dot(z);
        return residual * residual + reg * theta.squaredNorm();
    }

    Eigen::VectorXd gradient(const Eigen::VectorXd& theta, const Eigen::VectorXd& z, double y) const {
        check(theta, z);
        return 2.0 * (theta.dot(z) - y) * z + 2.0 * reg * theta;
    }

private:
    static void check(const Eigen::VectorXd& theta, const Eigen::VectorXd& z) {
        if (theta.size() != z.size()) {
            throw InputError("loss: parameter has dimension " + std::to_string(theta.size()) +
                             ", features have " + std::to_string(z.size()));
        }
    }
};

static_assert(ConvexLoss<QuadraticLoss>);

} // namespace domkl
