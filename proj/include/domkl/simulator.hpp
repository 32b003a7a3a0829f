#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

#include "domkl/data.hpp"
#include "domkl/error.hpp"
#include "domkl/kernels.hpp"
#include "domkl/learner.hpp"
#include "domkl/losses.hpp"
#include "domkl/random.hpp"
#include "domkl/topology.hpp"

namespace domkl {

enum class Mode { domkl, dokl };
enum class WeightMode { neighbor, message_passing };
enum class LocalSolver { closed_form, iterative };

inline std::string to_string(Mode m) { return m == Mode::domkl ? "domkl" : "dokl"; }
inline std::string to_string(WeightMode m) {
    return m == WeightMode::neighbor ? "neighbor" : "message_passing";
}
inline std::string to_string(LocalSolver s) {
    return s == LocalSolver::closed_form ? "closed_form" : "iterative";
}

inline constexpr double kSimplexTolerance = 1e-9;
inline constexpr double kDualTolerance = 1e-9;

/// Knobs for one simulated run. Topology, dictionary and data are passed
/// separately to `run`.
struct SimulationConfig {
    double rho = 1.0;
    double eta = 1.0;
    double eta_g = 1.0;
    double reg = 0.01;
    /// Rounds to simulate; 0 means the per-learner stream length.
    std::size_t rounds = 0;
    /// Sets rho = eta = eta_g = sqrt(T), overriding the explicit values.
    bool sqrt_t_hypers = true;
    Mode mode = Mode::domkl;
    /// 0-based dictionary entry used in DOKL mode.
    std::size_t kernel_index = 0;
    WeightMode weight_mode = WeightMode::neighbor;
    bool allow_cyclic_message_passing = false;
    LocalSolver solver = LocalSolver::closed_form;
    bool self_checks = true;
    std::size_t threads = 1;
};

/// Hyperparameters actually used after the sqrt(T) rule.
struct ResolvedHypers {
    double rho = 0.0;
    double eta = 0.0;
    double eta_g = 0.0;
    double reg = 0.0;
    std::size_t rounds = 0;
};

inline ResolvedHypers resolve_hypers(const SimulationConfig& cfg, std::size_t rounds) {
    ResolvedHypers h{cfg.rho, cfg.eta, cfg.eta_g, cfg.reg, rounds};
    if (cfg.sqrt_t_hypers) {
        const double root = std::sqrt(static_cast<double>(rounds));
        h.rho = h.eta = h.eta_g = root;
    }
    if (!(h.rho > 0.0)) throw ConfigError("rho must be > 0");
    if (!(h.eta > 0.0)) throw ConfigError("eta must be > 0");
    if (!(h.eta_g > 0.0)) throw ConfigError("eta_g must be > 0");
    if (!(h.reg >= 0.0)) throw ConfigError("reg must be >= 0");
    return h;
}

/// What learner j saw and did in one round.
struct LearnerRound {
    double prediction = 0.0;
    double label = 0.0;
    /// Squared prediction error of the combined function.
    double loss = 0.0;
    /// Weights used for the prediction.
    Vector weights;
    /// max |q_j - q_i| over kernels and neighbors (assumption a4 diagnostic).
    double epsilon = 0.0;
    /// f_i(x_j) for each neighbor i, in topology neighbor order.
    std::vector<double> neighbor_values;
    /// Regularized loss of each kernel's function (the Hedge increments).
    Vector kernel_losses;
};

struct RoundLog {
    std::size_t t = 0;
    std::vector<LearnerRound> learners;
};

struct SelfCheckReport {
    bool enabled = false;
    double max_simplex_error = 0.0;
    double max_dual_norm = 0.0;
    std::size_t violations = 0;
    std::optional<std::size_t> first_violation_round;

    bool passed() const noexcept { return violations == 0; }
};

struct RunLog {
    std::vector<RoundLog> rounds;
    std::vector<LearnerState> final_states;
    /// neighbors[j] mirrors topology.neighbors(j); aligns neighbor_values.
    std::vector<std::vector<std::size_t>> neighbors;
    ResolvedHypers hypers;
    SelfCheckReport checks;
    /// Per-round theta of every learner and kernel, only when requested.
    std::vector<std::vector<std::vector<Vector>>> theta_trace;

    std::size_t num_rounds() const noexcept { return rounds.size(); }
    std::size_t num_learners() const noexcept { return neighbors.size(); }
};

/// Seeded random permutation dealt round-robin into J equal streams of
/// floor(N/J) samples; the remainder is dropped.
inline std::vector<Dataset> partition_data(const Dataset& ds, std::size_t J, std::uint64_t seed) {
    if (J < 1) {
        throw ConfigError("partition_data: learner count must be >= 1");
    }
    if (ds.size() < J) {
        throw ConfigError("partition_data: " + std::to_string(ds.size()) + " samples cannot feed " +
                          std::to_string(J) + " learners");
    }
    std::vector<std::size_t> order(ds.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.below(i)]);
    }
    const std::size_t per = ds.size() / J;
    std::vector<Dataset> out;
    out.reserve(J);
    for (std::size_t j = 0; j < J; ++j) {
        FeatureMatrix x(static_cast<Eigen::Index>(per), static_cast<Eigen::Index>(ds.dim()));
        Vector y(static_cast<Eigen::Index>(per));
        for (std::size_t t = 0; t < per; ++t) {
            const std::size_t src = order[t * J + j];
            x.row(static_cast<Eigen::Index>(t)) = ds.features.row(static_cast<Eigen::Index>(src));
            y[static_cast<Eigen::Index>(t)] = ds.labels[static_cast<Eigen::Index>(src)];
        }
        DatasetMetadata meta = ds.metadata;
        meta.name = ds.metadata.name + "#" + std::to_string(j + 1);
        meta.warnings.clear();
        out.emplace_back(std::move(x), std::move(y), std::move(meta));
    }
    return out;
}

/// Interleaves streams round by round (t=0: learner 0, 1, ..., t=1: ...),
/// truncated to `rounds` per stream. `origin` gives the source learner.
struct MergedStream {
    Dataset dataset;
    std::vector<std::size_t> origin;
};

inline MergedStream merge_streams(std::span<const Dataset> streams, std::size_t rounds) {
    if (streams.empty()) {
        throw ConfigError("merge_streams: no streams");
    }
    const std::size_t J = streams.size();
    const std::size_t d = streams.front().dim();
    FeatureMatrix x(static_cast<Eigen::Index>(rounds * J), static_cast<Eigen::Index>(d));
    Vector y(static_cast<Eigen::Index>(rounds * J));
    MergedStream out;
    out.origin.reserve(rounds * J);
    for (std::size_t t = 0; t < rounds; ++t) {
        for (std::size_t j = 0; j < J; ++j) {
            if (streams[j].size() < rounds || streams[j].dim() != d) {
                throw ConfigError("merge_streams: stream " + std::to_string(j + 1) + " is too short or mis-shaped");
            }
            const auto row = static_cast<Eigen::Index>(t * J + j);
            x.row(row) = streams[j].features.row(static_cast<Eigen::Index>(t));
            y[row] = streams[j].labels[static_cast<Eigen::Index>(t)];
            out.origin.push_back(j);
        }
    }
    DatasetMetadata meta = streams.front().metadata;
    meta.name = "merged";
    out.dataset = Dataset(std::move(x), std::move(y), std::move(meta));
    return out;
}

namespace detail {

/// Runs body(j) for j in [0, n), serially or on a fixed-size TBB arena.
/// Each index writes only its own slots, so the result does not depend on
/// the thread count.
class LearnerExecutor {
public:
    explicit LearnerExecutor(std::size_t threads)
        : threads_(std::max<std::size_t>(1, threads)), arena_(static_cast<int>(threads_)) {}

    template <typename Body>
    void for_each(std::size_t n, Body&& body) {
        if (threads_ == 1 || n < 2) {
            for (std::size_t j = 0; j < n; ++j) {
                body(j);
            }
            return;
        }
        arena_.execute([&] {
            tbb::parallel_for(tbb::blocked_range<std::size_t>(0, n, 1),
                              [&](const tbb::blocked_range<std::size_t>& r) {
                                  for (std::size_t j = r.begin(); j != r.end(); ++j) {
                                      body(j);
                                  }
                              },
                              tbb::simple_partitioner{});
        });
    }

private:
    std::size_t threads_;
    tbb::task_arena arena_;
};

inline NeighborSnapshot snapshot_thetas(std::span<const LearnerState> states,
                                        std::span<const std::size_t> neighbors) {
    NeighborSnapshot snap;
    snap.ids.assign(neighbors.begin(), neighbors.end());
    snap.thetas.reserve(neighbors.size());
    for (auto i : neighbors) {
        std::vector<Vector> per_kernel;
        per_kernel.reserve(states[i].kernels.size());
        for (const auto& k : states[i].kernels) {
            per_kernel.push_back(k.theta);
        }
        snap.thetas.push_back(std::move(per_kernel));
    }
    return snap;
}

} // namespace detail

struct RunOptions {
    /// Record every learner's theta after each round (memory heavy).
    bool record_thetas = false;
};

/// Synchronous simulation of the distributed learners.
///
/// Each round t, for every learner j (in parallel where allowed):
///   1. build z_p(x_{j,t}); predict with the round-t state; log losses and
///      neighbor function values f_i(x_{j,t});
///   2. barrier, theta exchange #1: local OADMM step from round-t estimates;
///   3. barrier, theta exchange #2: dual step from round-(t+1) estimates;
///   4. accumulate per-kernel losses;
///   5. barrier, weight exchange: Hedge weights from own and neighbor
///      accumulated losses (or from incoming messages in message-passing mode).
inline RunLog run(const Topology& topology, const KernelDictionary& full_dictionary,
                  const SimulationConfig& cfg, std::span<const Dataset> streams,
                  const RunOptions& options = {}) {
    const std::size_t J = topology.num_learners();
    if (streams.size() != J) {
        throw ConfigError("run: topology has " + std::to_string(J) + " learners but " +
                          std::to_string(streams.size()) + " streams were given");
    }
    std::size_t T = cfg.rounds;
    if (T == 0) {
        T = streams.front().size();
        for (const auto& s : streams) {
            T = std::min(T, s.size());
        }
    }
    if (T < 1) {
        throw ConfigError("run: need at least one round");
    }
    for (std::size_t j = 0; j < J; ++j) {
        if (streams[j].size() < T) {
            throw ConfigError("run: stream " + std::to_string(j + 1) + " has " +
                              std::to_string(streams[j].size()) + " samples, fewer than T = " +
                              std::to_string(T));
        }
        if (streams[j].dim() != full_dictionary.dim_input()) {
            throw ConfigError("run: stream " + std::to_string(j + 1) + " has dimension " +
                              std::to_string(streams[j].dim()) + ", dictionary expects " +
                              std::to_string(full_dictionary.dim_input()));
        }
    }
    if (cfg.weight_mode == WeightMode::message_passing && !topology.is_acyclic() &&
        !cfg.allow_cyclic_message_passing) {
        throw ConfigError("message-passing weights need an acyclic topology "
                          "(set allow_cyclic_message_passing to override)");
    }

    const KernelDictionary dictionary =
        cfg.mode == Mode::dokl ? full_dictionary.single(cfg.kernel_index) : full_dictionary;
    const std::size_t P = dictionary.size();
    const std::size_t dim = dictionary.dim_features();
    const ResolvedHypers hypers = resolve_hypers(cfg, T);
    const OadmmParams oadmm{hypers.rho, hypers.eta, hypers.reg};
    const QuadraticLoss loss(hypers.reg);
    const bool hedge = cfg.mode == Mode::domkl;

    RunLog log;
    log.hypers = hypers;
    log.checks.enabled = cfg.self_checks;
    log.neighbors.resize(J);
    std::vector<LearnerState> current;
    current.reserve(J);
    for (std::size_t j = 0; j < J; ++j) {
        log.neighbors[j] = topology.neighbors(j);
        current.push_back(LearnerState::initial(j, P, dim, log.neighbors[j]));
    }
    log.rounds.reserve(T);

    detail::LearnerExecutor executor(cfg.threads);
    std::vector<std::vector<Vector>> feats(J, std::vector<Vector>(P));

    for (std::size_t t = 0; t < T; ++t) {
        RoundLog round;
        round.t = t;
        round.learners.resize(J);
        std::vector<LearnerState> next = current;

        // Predict with the round-t state, then log.
        executor.for_each(J, [&](std::size_t j) {
            const auto x = streams[j].row(t);
            const double y = streams[j].labels[static_cast<Eigen::Index>(t)];
            auto& rec = round.learners[j];
            for (std::size_t p = 0; p < P; ++p) {
                dictionary[p].features_into(x, feats[j][p]);
            }
            rec.label = y;
            rec.prediction = predict(current[j], feats[j]);
            rec.loss = (rec.prediction - y) * (rec.prediction - y);
            rec.weights = current[j].weights;
            rec.kernel_losses.resize(static_cast<Eigen::Index>(P));
            for (std::size_t p = 0; p < P; ++p) {
                rec.kernel_losses[static_cast<Eigen::Index>(p)] = loss.value(current[j].kernels[p].theta, feats[j][p], y);
            }
            std::vector<Vector> neighbor_weights;
            for (auto i : log.neighbors[j]) {
                rec.neighbor_values.push_back(predict(current[i], feats[j]));
                neighbor_weights.push_back(current[i].weights);
            }
            rec.epsilon = weight_disagreement(current[j].weights, neighbor_weights);
        });

        // Local OADMM step from the round-t snapshot.
        executor.for_each(J, [&](std::size_t j) {
            const auto snap = detail::snapshot_thetas(current, log.neighbors[j]);
            snap.require_covers(topology.neighbors(j), P, dim);
            const double y = streams[j].labels[static_cast<Eigen::Index>(t)];
            const std::size_t degree = log.neighbors[j].size();
            for (std::size_t p = 0; p < P; ++p) {
                const auto& k = current[j].kernels[p];
                const Vector g = gamma(k.theta, snap, p);
                if (cfg.solver == LocalSolver::closed_form) {
                    next[j].kernels[p].theta = local_update_quadratic(k.theta, k.dual, feats[j][p], y, g, degree, oadmm);
                } else {
                    auto res = local_update_generic(k.theta, k.dual, feats[j][p], y, g, degree, oadmm.rho,
                                                    oadmm.eta, loss);
                    if (!res.converged) {
                        throw NumericError("round " + std::to_string(t + 1) + ", learner " + std::to_string(j + 1) +
                                           ": iterative local step did not converge (gradient norm " +
                                           std::to_string(res.gradient_norm) + ")");
                    }
                    next[j].kernels[p].theta = std::move(res.theta);
                }
            }
        });

        // Dual step from the round-(t+1) snapshot; accumulate Hedge losses.
        executor.for_each(J, [&](std::size_t j) {
            const auto snap = detail::snapshot_thetas(next, log.neighbors[j]);
            snap.require_covers(topology.neighbors(j), P, dim);
            for (std::size_t p = 0; p < P; ++p) {
                auto& k = next[j].kernels[p];
                k.dual = dual_update(current[j].kernels[p].dual, k.theta, snap, p, oadmm.rho);
                k.loss_sum += round.learners[j].kernel_losses[static_cast<Eigen::Index>(p)];
            }
        });

        // Weight exchange.
        if (hedge) {
            executor.for_each(J, [&](std::size_t j) {
                const Vector own = next[j].loss_sums();
                if (cfg.weight_mode == WeightMode::neighbor) {
                    std::vector<Vector> incoming;
                    for (auto i : log.neighbors[j]) {
                        incoming.push_back(next[i].loss_sums());
                    }
                    next[j].weights = combine_weights(own, incoming, hypers.eta_g);
                } else {
                    next[j].weights = combine_weights(own, current[j].messages, hypers.eta_g);
                    // Pull m_{l->j,t+1}, which l forms from its own round-t inbox.
                    for (std::size_t k = 0; k < log.neighbors[j].size(); ++k) {
                        const auto l = log.neighbors[j][k];
                        next[j].messages[k] = message_update(next[l].loss_sums(), current[l].message_from,
                                                             current[l].messages, j);
                    }
                }
            });
        }

        if (cfg.self_checks) {
            bool violated = false;
            for (const auto& s : next) {
                const double err = std::abs(s.weights.sum() - 1.0);
                log.checks.max_simplex_error = std::max(log.checks.max_simplex_error, err);
                if (err > kSimplexTolerance || s.weights.minCoeff() < 0.0 || s.weights.maxCoeff() > 1.0) {
                    violated = true;
                }
            }
            for (std::size_t p = 0; p < P; ++p) {
                Vector total = Vector::Zero(static_cast<Eigen::Index>(dim));
                for (const auto& s : next) {
                    total += s.kernels[p].dual;
                }
                const double norm = total.norm();
                log.checks.max_dual_norm = std::max(log.checks.max_dual_norm, norm);
                if (norm > kDualTolerance) {
                    violated = true;
                }
            }
            if (violated) {
                ++log.checks.violations;
                if (!log.checks.first_violation_round) {
                    log.checks.first_violation_round = t + 1;
                }
            }
        }

        if (options.record_thetas) {
            std::vector<std::vector<Vector>> snapshot(J);
            for (std::size_t j = 0; j < J; ++j) {
                for (const auto& k : next[j].kernels) {
                    snapshot[j].push_back(k.theta);
                }
            }
            log.theta_trace.push_back(std::move(snapshot));
        }

        current = std::move(next);
        log.rounds.push_back(std::move(round));
    }
    log.final_states = std::move(current);
    return log;
}

/// Per-sample record of the centralized baseline.
struct CentralLog {
    std::vector<double> predictions;
    std::vector<double> labels;
    std::vector<std::size_t> origin;
    Vector final_weights;
    std::vector<Vector> final_thetas;
    double step = 0.0;
};

/// Centralized OMKL baseline on the merged stream: per-kernel online
/// gradient descent theta <- theta - step * grad, Hedge weights from the
/// learner's own accumulated losses. `step` defaults to 1/sqrt(length).
inline CentralLog run_centralized_omkl(const KernelDictionary& dictionary, double reg, double eta_g,
                                       const MergedStream& merged, std::optional<double> step = {}) {
    const auto& ds = merged.dataset;
    if (ds.size() == 0) {
        throw ConfigError("run_centralized_omkl: empty stream");
    }
    if (ds.dim() != dictionary.dim_input()) {
        throw ConfigError("run_centralized_omkl: stream dimension does not match dictionary");
    }
    if (!(eta_g > 0.0)) {
        throw ConfigError("eta_g must be > 0");
    }
    const QuadraticLoss loss(reg);
    const std::size_t P = dictionary.size();
    CentralLog out;
    out.step = step.value_or(1.0 / std::sqrt(static_cast<double>(ds.size())));
    if (!(out.step > 0.0)) {
        throw ConfigError("OGD step must be > 0");
    }
    LearnerState state = LearnerState::initial(0, P, dictionary.dim_features());
    std::vector<Vector> feats(P);
    out.predictions.reserve(ds.size());
    out.labels.reserve(ds.size());
    for (std::size_t n = 0; n < ds.size(); ++n) {
        const auto x = ds.row(n);
        const double y = ds.labels[static_cast<Eigen::Index>(n)];
        for (std::size_t p = 0; p < P; ++p) {
            dictionary[p].features_into(x, feats[p]);
        }
        out.predictions.push_back(predict(state, feats));
        out.labels.push_back(y);
        for (std::size_t p = 0; p < P; ++p) {
            auto& k = state.kernels[p];
            k.loss_sum += loss.value(k.theta, feats[p], y);
            k.theta -= out.step * loss.gradient(k.theta, feats[p], y);
        }
        state.weights = combine_weights(state.loss_sums(), {}, eta_g);
    }
    out.origin = merged.origin;
    out.final_weights = state.weights;
    for (const auto& k : state.kernels) {
        out.final_thetas.push_back(k.theta);
    }
    return out;
}

} // namespace domkl
