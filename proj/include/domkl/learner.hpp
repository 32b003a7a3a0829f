#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "domkl/error.hpp"
#include "domkl/kernels.hpp"
#include "domkl/losses.hpp"

namespace domkl {

/// Per-kernel state of one learner: primal estimate, dual variable and the
/// running sum of that kernel's losses (the Hedge exponent before scaling).
struct KernelLearnerState {
    Vector theta;
    Vector dual;
    double loss_sum = 0.0;

    static KernelLearnerState zero(std::size_t dim) {
        return {Vector::Zero(static_cast<Eigen::Index>(dim)),
                Vector::Zero(static_cast<Eigen::Index>(dim)), 0.0};
    }
};

/// Everything learner j owns between rounds.
///
/// `messages` holds, for each neighbor l (aligned with `message_from`), the
/// most recent incoming message m_{l->j} in loss units: a per-kernel vector
/// M with m = exp(-M / eta_g). Unused unless message passing is enabled.
struct LearnerState {
    std::size_t id = 0;
    std::vector<KernelLearnerState> kernels;
    Vector weights;
    std::vector<std::size_t> message_from;
    std::vector<Vector> messages;

    /// Zero primal/dual, uniform weights, all-ones messages (zero in loss units).
    static LearnerState initial(std::size_t id, std::size_t num_kernels, std::size_t dim,
                                std::span<const std::size_t> neighbors = {}) {
        LearnerState s;
        s.id = id;
        s.kernels.assign(num_kernels, KernelLearnerState::zero(dim));
        s.weights = Vector::Constant(static_cast<Eigen::Index>(num_kernels),
                                     1.0 / static_cast<double>(num_kernels));
        s.message_from.assign(neighbors.begin(), neighbors.end());
        s.messages.assign(neighbors.size(), Vector::Zero(static_cast<Eigen::Index>(num_kernels)));
        return s;
    }

    std::size_t num_kernels() const noexcept { return kernels.size(); }

    /// Per-kernel accumulated losses as one vector.
    Vector loss_sums() const {
        Vector out(static_cast<Eigen::Index>(kernels.size()));
        for (std::size_t p = 0; p < kernels.size(); ++p) {
            out[static_cast<Eigen::Index>(p)] = kernels[p].loss_sum;
        }
        return out;
    }
};

/// Copies of neighbor parameter vectors taken at an exchange barrier.
/// `thetas[k][p]` belongs to neighbor `ids[k]`, kernel p.
struct NeighborSnapshot {
    std::vector<std::size_t> ids;
    std::vector<std::vector<Vector>> thetas;

    std::size_t size() const noexcept { return ids.size(); }

    /// Throws ProtocolError unless the snapshot covers exactly `expected`
    /// and every vector has dimension `dim` for all `num_kernels` kernels.
    void require_covers(std::span<const std::size_t> expected, std::size_t num_kernels,
                        std::size_t dim) const {
        if (ids.size() != expected.size() || !std::equal(ids.begin(), ids.end(), expected.begin())) {
            throw ProtocolError("neighbor snapshot does not cover exactly the learner's neighbors");
        }
        if (thetas.size() != ids.size()) {
            throw ProtocolError("neighbor snapshot is missing parameter vectors");
        }
        for (const auto& per_kernel : thetas) {
            if (per_kernel.size() != num_kernels) {
                throw ProtocolError("neighbor snapshot has the wrong number of kernels");
            }
            for (const auto& v : per_kernel) {
                if (static_cast<std::size_t>(v.size()) != dim) {
                    throw ProtocolError("neighbor snapshot vector has the wrong dimension");
                }
            }
        }
    }
};

struct OadmmParams {
    double rho = 1.0;
    double eta = 1.0;
    double reg = 0.01;

    void validate() const {
        if (!(rho > 0.0)) throw ConfigError("rho must be > 0");
        if (!(eta > 0.0)) throw ConfigError("eta must be > 0");
        if (!(reg >= 0.0)) throw ConfigError("reg must be >= 0");
    }
};

namespace detail {
inline void check_dim(const Vector& a, const Vector& b, const char* what) {
    if (a.size() != b.size()) {
        throw InputError(std::string(what) + ": dimension mismatch (" + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()) + ")");
    }
}
} // namespace detail

/// Sum over neighbors of the midpoints (theta_j + theta_i) / 2 for kernel p.
inline Vector gamma(const Vector& own_theta, const NeighborSnapshot& snapshot, std::size_t p) {
    Vector out = Vector::Zero(own_theta.size());
    for (const auto& per_kernel : snapshot.thetas) {
        if (p >= per_kernel.size()) {
            throw ProtocolError("gamma: neighbor snapshot has no entry for kernel " + std::to_string(p));
        }
        detail::check_dim(own_theta, per_kernel[p], "gamma");
        out += 0.5 * (own_theta + per_kernel[p]);
    }
    return out;
}

/// Closed-form OADMM primal step for the regularized quadratic loss.
///
/// Minimizes
///   (y - t'z)^2 + reg ||t||^2 + dual't + rho/2 sum_i ||t - mid_i||^2 + eta/2 ||t - theta||^2
/// whose stationarity condition is (2 zz' + c I) t = b with
///   b = 2 y z + eta theta + rho gamma - dual,   c = 2 reg + eta + rho |N|.
/// The rank-one system is inverted with Sherman-Morrison, O(dim).
inline Vector local_update_quadratic(const Vector& theta, const Vector& dual, const Vector& z,
                                     double y, const Vector& gamma_sum, std::size_t degree,
                                     const OadmmParams& params) {
    detail::check_dim(theta, z, "local_update_quadratic");
    detail::check_dim(theta, dual, "local_update_quadratic");
    detail::check_dim(theta, gamma_sum, "local_update_quadratic");
    const double c = 2.0 * params.reg + params.eta + params.rho * static_cast<double>(degree);
    if (!(c > 0.0)) {
        throw ConfigError("local_update_quadratic: 2*reg + eta + rho*|N| must be > 0");
    }
    const Vector b = (2.0 * y) * z + params.eta * theta + params.rho * gamma_sum - dual;
    const double coeff = 2.0 * z.dot(b) / (c + 2.0 * z.squaredNorm());
    return (b - coeff * z) / c;
}

struct IterativeUpdate {
    Vector theta;
    double gradient_norm = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

/// OADMM primal step for an arbitrary convex loss, solved by gradient
/// descent with backtracking. Stops at gradient norm <= tolerance or after
/// max_iterations; the result says which.
template <ConvexLoss Loss>
IterativeUpdate local_update_generic(const Vector& theta, const Vector& dual, const Vector& z,
                                     double y, const Vector& gamma_sum, std::size_t degree,
                                     double rho, double eta, const Loss& loss,
                                     double tolerance = 1e-8, std::size_t max_iterations = 10000) {
    detail::check_dim(theta, z, "local_update_generic");
    detail::check_dim(theta, dual, "local_update_generic");
    detail::check_dim(theta, gamma_sum, "local_update_generic");
    const double n = static_cast<double>(degree);

    // Midpoint penalty written as rho/2 (n ||t||^2 - 2 t'gamma) + const.
    auto objective = [&](const Vector& t) {
        return loss.value(t, z, y) + dual.dot(t) + 0.5 * rho * (n * t.squaredNorm() - 2.0 * t.dot(gamma_sum)) +
               0.5 * eta * (t - theta).squaredNorm();
    };
    auto grad = [&](const Vector& t) -> Vector {
        return loss.gradient(t, z, y) + dual + rho * (n * t - gamma_sum) + eta * (t - theta);
    };

    IterativeUpdate out{theta, 0.0, 0, false};
    Vector g = grad(out.theta);
    double f = objective(out.theta);
    double step = 1.0 / (eta + rho * n + 2.0);
    for (; out.iterations < max_iterations; ++out.iterations) {
        out.gradient_norm = g.norm();
        if (out.gradient_norm <= tolerance) {
            out.converged = true;
            return out;
        }
        const double g2 = g.squaredNorm();
        // Armijo on f; once the predicted decrease is below rounding error in
        // f, a step is accepted when it shrinks the gradient instead.
        const double noise = 1e-13 * (std::abs(f) + 1.0);
        Vector candidate;
        Vector g_candidate;
        double f_candidate = 0.0;
        for (;;) {
            candidate = out.theta - step * g;
            f_candidate = objective(candidate);
            if (f_candidate <= f - 0.5 * step * g2) {
                g_candidate = grad(candidate);
                break;
            }
            if (0.5 * step * g2 < noise) {
                g_candidate = grad(candidate);
                if (g_candidate.norm() < out.gradient_norm) break;
            }
            step *= 0.5;
            if (step < 1e-16) {
                out.converged = false;
                return out;
            }
        }
        out.theta = std::move(candidate);
        f = f_candidate;
        g = std::move(g_candidate);
        step *= 2.0;
    }
    out.gradient_norm = g.norm();
    out.converged = out.gradient_norm <= tolerance;
    return out;
}

/// dual + rho/2 sum_i (theta_j - theta_i), using post-update estimates.
inline Vector dual_update(const Vector& dual, const Vector& own_theta_next,
                          const NeighborSnapshot& snapshot_next, std::size_t p, double rho) {
    detail::check_dim(dual, own_theta_next, "dual_update");
    Vector out = dual;
    for (const auto& per_kernel : snapshot_next.thetas) {
        if (p >= per_kernel.size()) {
            throw ProtocolError("dual_update: neighbor snapshot has no entry for kernel " + std::to_string(p));
        }
        detail::check_dim(own_theta_next, per_kernel[p], "dual_update");
        out += (0.5 * rho) * (own_theta_next - per_kernel[p]);
    }
    return out;
}

/// Accumulated loss of one kernel, i.e. -eta_g log(w_hat).
inline double hedge_local_exponent(const KernelLearnerState& state) noexcept { return state.loss_sum; }

/// Hedge weights: q_p proportional to exp(-(L_own[p] + sum_i L_i[p]) / eta_g),
/// normalized with log-sum-exp.
inline Vector combine_weights(const Vector& own, std::span<const Vector> neighbors, double eta_g) {
    if (!(eta_g > 0.0)) {
        throw ConfigError("eta_g must be > 0");
    }
    Vector combined = own;
    for (const auto& n : neighbors) {
        detail::check_dim(own, n, "combine_weights");
        combined += n;
    }
    if (!combined.allFinite()) {
        throw NumericError("combine_weights: non-finite accumulated loss");
    }
    const Vector logits = -combined / eta_g;
    const double peak = logits.maxCoeff();
    Vector q = (logits.array() - peak).exp().matrix();
    q /= q.sum();
    return q;
}

/// Message-passing update in loss units:
///   M_{j->target} = L_own + sum_{l in N_j, l != target} M_{l->j}.
/// In the multiplicative form this is m_{j->i} = w_hat_j * prod_{l != i} m_{l->j}.
inline Vector message_update(const Vector& own, std::span<const std::size_t> incoming_from,
                             std::span<const Vector> incoming, std::size_t target) {
    if (incoming_from.size() != incoming.size()) {
        throw ProtocolError("message_update: sender list and message list differ in length");
    }
    if (std::find(incoming_from.begin(), incoming_from.end(), target) == incoming_from.end()) {
        throw ProtocolError("message_update: target " + std::to_string(target) + " is not a neighbor");
    }
    Vector out = own;
    for (std::size_t k = 0; k < incoming.size(); ++k) {
        if (incoming_from[k] == target) {
            continue;
        }
        detail::check_dim(own, incoming[k], "message_update");
        out += incoming[k];
    }
    return out;
}

/// f_hat(x) = sum_p q_p theta_p' z_p(x), given precomputed per-kernel features.
inline double predict(const LearnerState& state, std::span<const Vector> features) {
    if (features.size() != state.num_kernels()) {
        throw InputError("predict: expected features for " + std::to_string(state.num_kernels()) +
                         " kernels, got " + std::to_string(features.size()));
    }
    double out = 0.0;
    for (std::size_t p = 0; p < features.size(); ++p) {
        detail::check_dim(state.kernels[p].theta, features[p], "predict");
        out += state.weights[static_cast<Eigen::Index>(p)] * state.kernels[p].theta.dot(features[p]);
    }
    return out;
}

inline double predict(const LearnerState& state, const KernelDictionary& dictionary,
                      std::span<const double> x) {
    if (dictionary.size() != state.num_kernels()) {
        throw InputError("predict: dictionary size does not match learner state");
    }
    std::vector<Vector> features;
    features.reserve(dictionary.size());
    for (std::size_t p = 0; p < dictionary.size(); ++p) {
        features.push_back(dictionary[p].features(x));
    }
    return predict(state, features);
}

/// max over kernels and neighbors of |q_j - q_i|.
inline double weight_disagreement(const Vector& own, std::span<const Vector> neighbors) {
    double out = 0.0;
    for (const auto& n : neighbors) {
        detail::check_dim(own, n, "weight_disagreement");
        out = std::max(out, (own - n).cwiseAbs().maxCoeff());
    }
    return out;
}

} // namespace domkl
