#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <tuple>
#include <vector>

#include "sdplab/dataset.hpp"
#include "sdplab/errors.hpp"
#include "sdplab/losses.hpp"
#include "sdplab/matrix.hpp"
#include "sdplab/network.hpp"
#include "sdplab/rng.hpp"

namespace sdplab {

enum class PruneMethod {
    random,
    mbp,          // layerwise magnitude
    global_mbp,   // magnitude, selection across layers
    gradient_mbp, // accumulated |gradient|
    taylor,       // accumulated |gradient| x |weight|
    l0,           // hard-concrete gates
    l1_mbp,       // magnitude under L1 weight regularization
    l2_mbp,       // magnitude under L2 weight regularization
    lookahead,    // magnitude scaled by neighbor norms
    lamp,         // tail-normalized squared magnitude, global selection
    fdm_sdp       // teacher-anchored squared-distortion increment
};

inline std::string prune_method_name(PruneMethod m) {
    switch (m) {
        case PruneMethod::random: return "random";
        case PruneMethod::mbp: return "mbp";
        case PruneMethod::global_mbp: return "global_mbp";
        case PruneMethod::gradient_mbp: return "gradient_mbp";
        case PruneMethod::taylor: return "taylor";
        case PruneMethod::l0: return "l0";
        case PruneMethod::l1_mbp: return "l1_mbp";
        case PruneMethod::l2_mbp: return "l2_mbp";
        case PruneMethod::lookahead: return "lookahead";
        case PruneMethod::lamp: return "lamp";
        case PruneMethod::fdm_sdp: return "fdm_sdp";
    }
    throw ValueError("unknown prune method");
}

inline PruneMethod prune_method_from_name(const std::string& name) {
    for (int m = 0; m <= static_cast<int>(PruneMethod::fdm_sdp); ++m)
        if (prune_method_name(static_cast<PruneMethod>(m)) == name)
            return static_cast<PruneMethod>(m);
    throw ConfigError("unknown prune method '" + name + "'");
}

constexpr double kPrunedScore = std::numeric_limits<double>::infinity();

// One score matrix per network layer; empty matrices at non-prunable layers.
// Already-pruned positions carry +infinity so they are never re-selected.
struct ImportanceScores {
    std::string method;
    std::vector<DenseMatrix> scores;

    void validate(const NetworkState& net) const {
        if (scores.size() != net.layers.size())
            throw DimensionError("scores: layer count mismatch");
        for (std::size_t l = 0; l < scores.size(); ++l) {
            const auto& layer = net.layers[l];
            if (!layer.prunable) {
                if (!scores[l].empty())
                    throw ValueError("scores: non-prunable layer " + std::to_string(l) +
                                     " must be empty");
                continue;
            }
            if (!scores[l].same_shape(layer.W))
                throw DimensionError("scores: layer " + std::to_string(l) + " shape");
            for (std::size_t i = 0; i < scores[l].size(); ++i) {
                const double s = scores[l].values()[i];
                if (layer.M.values()[i] == 0.0) {
                    if (s != kPrunedScore)
                        throw ValueError("scores: pruned position must be +inf");
                } else if (!std::isfinite(s)) {
                    throw ValueError("scores: non-finite score at live position");
                }
            }
        }
    }
};

namespace detail {

inline ImportanceScores empty_scores(const NetworkState& net, const std::string& method) {
    ImportanceScores s;
    s.method = method;
    s.scores.resize(net.layers.size());
    for (std::size_t l = 0; l < net.layers.size(); ++l)
        if (net.layers[l].prunable)
            s.scores[l] = DenseMatrix(net.layers[l].W.rows(), net.layers[l].W.cols());
    return s;
}

inline void mark_pruned(ImportanceScores& s, const NetworkState& net) {
    for (std::size_t l = 0; l < s.scores.size(); ++l) {
        if (!net.layers[l].prunable) continue;
        for (std::size_t i = 0; i < s.scores[l].size(); ++i)
            if (net.layers[l].M.values()[i] == 0.0) s.scores[l].values()[i] = kPrunedScore;
    }
}

}  // namespace detail

inline ImportanceScores score_magnitude(const NetworkState& net) {
    ImportanceScores s = detail::empty_scores(net, "mbp");
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        if (!net.layers[l].prunable) continue;
        for (std::size_t i = 0; i < s.scores[l].size(); ++i)
            s.scores[l].values()[i] = std::abs(net.layers[l].W.values()[i]);
    }
    detail::mark_pruned(s, net);
    return s;
}

// Sum over batches of per-batch |d CE / d W|, in batch order. Shared by the
// gradient and first-order criteria.
inline std::vector<DenseMatrix> accumulate_abs_gradients(const NetworkState& net,
                                                         const std::vector<LabeledBatch>& batches) {
    if (batches.empty()) throw ValueError("gradient accumulation: no batches");
    std::vector<DenseMatrix> acc(net.layers.size());
    for (std::size_t l = 0; l < net.layers.size(); ++l)
        acc[l] = DenseMatrix(net.layers[l].W.rows(), net.layers[l].W.cols());
    for (const auto& batch : batches) {
        ForwardTrace trace = forward(net, batch.inputs);
        CeResult ce = cross_entropy(trace.logits(), batch.labels);
        Gradients grads = backward(net, trace, ce.dlogits);
        for (std::size_t l = 0; l < grads.size(); ++l)
            for (std::size_t i = 0; i < grads[l].dW.size(); ++i) {
                const double g = grads[l].dW.values()[i];
                if (!std::isfinite(g))
                    throw DivergenceError("gradient accumulation: non-finite gradient");
                acc[l].values()[i] += std::abs(g);
            }
    }
    return acc;
}

inline ImportanceScores score_gradient(const NetworkState& net,
                                       const std::vector<LabeledBatch>& batches) {
    auto acc = accumulate_abs_gradients(net, batches);
    ImportanceScores s = detail::empty_scores(net, "gradient_mbp");
    for (std::size_t l = 0; l < net.layers.size(); ++l)
        if (net.layers[l].prunable) s.scores[l] = acc[l];
    detail::mark_pruned(s, net);
    return s;
}

inline ImportanceScores score_taylor(const NetworkState& net,
                                     const std::vector<LabeledBatch>& batches) {
    auto acc = accumulate_abs_gradients(net, batches);
    ImportanceScores s = detail::empty_scores(net, "taylor");
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        if (!net.layers[l].prunable) continue;
        for (std::size_t i = 0; i < acc[l].size(); ++i)
            s.scores[l].values()[i] =
                acc[l].values()[i] * std::abs(net.layers[l].W.values()[i]);
    }
    detail::mark_pruned(s, net);
    return s;
}

// |W_l[i,j]| scaled by the L2 norm of row j of the upstream prunable layer
// and of column i of the downstream prunable layer. A boundary or
// non-prunable neighbor contributes factor 1. Neighbor norms use effective
// (masked) weights.
inline ImportanceScores score_lookahead(const NetworkState& net) {
    if (net.layers.size() < 2) throw ValueError("lookahead: need at least 2 layers");
    ImportanceScores s = detail::empty_scores(net, "lookahead");
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        if (!net.layers[l].prunable) continue;
        const auto& layer = net.layers[l];

        std::vector<double> row_norm_prev(layer.fan_in(), 1.0);
        if (l > 0 && net.layers[l - 1].prunable) {
            const DenseMatrix prev = net.layers[l - 1].effective_weights();
            for (std::size_t j = 0; j < prev.rows(); ++j) {
                double sum = 0.0;
                for (std::size_t k = 0; k < prev.cols(); ++k) sum += prev(j, k) * prev(j, k);
                row_norm_prev[j] = std::sqrt(sum);
            }
        }
        std::vector<double> col_norm_next(layer.fan_out(), 1.0);
        if (l + 1 < net.layers.size() && net.layers[l + 1].prunable) {
            const DenseMatrix next = net.layers[l + 1].effective_weights();
            for (std::size_t i = 0; i < next.cols(); ++i) {
                double sum = 0.0;
                for (std::size_t k = 0; k < next.rows(); ++k) sum += next(k, i) * next(k, i);
                col_norm_next[i] = std::sqrt(sum);
            }
        }
        for (std::size_t i = 0; i < layer.fan_out(); ++i)
            for (std::size_t j = 0; j < layer.fan_in(); ++j)
                s.scores[l](i, j) = std::abs(layer.W(i, j)) * row_norm_prev[j] * col_norm_next[i];
    }
    detail::mark_pruned(s, net);
    return s;
}

// Per layer: sort live w^2 ascending (ties by flat index); the u-th value
// scores w^2_u divided by the trailing sum from u onward. Intended for
// global selection, which then prunes layers at adaptive rates.
inline ImportanceScores score_lamp(const NetworkState& net) {
    ImportanceScores s = detail::empty_scores(net, "lamp");
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        if (!net.layers[l].prunable) continue;
        const auto& layer = net.layers[l];
        std::vector<std::size_t> live;
        std::vector<double> sq;
        for (std::size_t i = 0; i < layer.W.size(); ++i)
            if (layer.M.values()[i] != 0.0) {
                live.push_back(i);
                sq.push_back(layer.W.values()[i] * layer.W.values()[i]);
            }
        std::vector<std::size_t> order = argsort_by_key(sq);
        std::vector<double> tail(order.size() + 1, 0.0);
        for (std::size_t u = order.size(); u-- > 0;) tail[u] = tail[u + 1] + sq[order[u]];
        for (std::size_t u = 0; u < order.size(); ++u)
            s.scores[l].values()[live[order[u]]] = sq[order[u]] / tail[u];
    }
    detail::mark_pruned(s, net);
    return s;
}

// Increase of the separable squared-distortion surrogate
// ||W - M.W||^2 + lambda ||W_teacher - M.W||^2 when one weight is pruned:
// w^2 + lambda ((w_t)^2 - (w_t - w)^2). May be negative.
inline ImportanceScores score_fdm_sdp(const NetworkState& student, const NetworkState& teacher,
                                      double lambda_fdm) {
    if (student.layers.size() != teacher.layers.size())
        throw DimensionError("fdm scores: layer count mismatch");
    if (lambda_fdm < 0.0) throw ValueError("fdm scores: lambda must be >= 0");
    ImportanceScores s = detail::empty_scores(student, "fdm_sdp");
    for (std::size_t l = 0; l < student.layers.size(); ++l) {
        if (!student.layers[l].prunable) continue;
        const auto& ws = student.layers[l].W;
        const auto& wt = teacher.layers[l].W;
        if (!ws.same_shape(wt))
            throw DimensionError("fdm scores: layer " + std::to_string(l) + " shape mismatch");
        for (std::size_t i = 0; i < ws.size(); ++i) {
            const double w = ws.values()[i], t = wt.values()[i];
            s.scores[l].values()[i] = w * w + lambda_fdm * (t * t - (t - w) * (t - w));
        }
    }
    detail::mark_pruned(s, student);
    return s;
}

struct MaskUpdate {
    std::vector<DenseMatrix> new_masks;
    std::vector<std::size_t> removed_per_layer;
    std::vector<std::size_t> skipped_layers;

    std::size_t total_removed() const {
        std::size_t n = 0;
        for (auto c : removed_per_layer) n += c;
        return n;
    }
};

struct PruneEvent {
    std::size_t step = 0;
    std::string method;
    double fraction = 0.0;
    std::vector<std::size_t> removed_per_layer;
    std::vector<std::size_t> skipped_layers;
};

namespace detail {

inline MaskUpdate copy_masks(const NetworkState& net) {
    MaskUpdate u;
    u.new_masks.reserve(net.layers.size());
    for (const auto& layer : net.layers) u.new_masks.push_back(layer.M);
    u.removed_per_layer.assign(net.layers.size(), 0);
    return u;
}

inline void check_fraction(double f) {
    if (!(f > 0.0 && f < 1.0))
        throw ValueError("mask build: fraction must lie in (0,1), got " + std::to_string(f));
}

}  // namespace detail

// Per prunable layer, clears the floor(fraction x live) lowest-score live
// positions; ties go to the lower flat index. Layers with < 2 live weights
// are skipped and reported.
inline MaskUpdate build_mask_layerwise(const NetworkState& net, const ImportanceScores& scores,
                                       double fraction_of_remaining) {
    detail::check_fraction(fraction_of_remaining);
    scores.validate(net);
    MaskUpdate update = detail::copy_masks(net);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        if (!net.layers[l].prunable) continue;
        std::vector<std::size_t> live;
        std::vector<double> keys;
        for (std::size_t i = 0; i < net.layers[l].M.size(); ++i)
            if (net.layers[l].M.values()[i] != 0.0) {
                live.push_back(i);
                keys.push_back(scores.scores[l].values()[i]);
            }
        if (live.size() < 2) {
            update.skipped_layers.push_back(l);
            log_note("prune: skipping layer " + std::to_string(l) + " with " +
                     std::to_string(live.size()) + " live weights");
            continue;
        }
        const auto remove =
            static_cast<std::size_t>(fraction_of_remaining * static_cast<double>(live.size()));
        std::vector<std::size_t> order = argsort_by_key(keys);
        for (std::size_t k = 0; k < remove; ++k)
            update.new_masks[l].values()[live[order[k]]] = 0.0;
        update.removed_per_layer[l] = remove;
    }
    return update;
}

// Selection over the concatenated live scores of every prunable layer;
// removes floor(fraction x total live) positions overall.
inline MaskUpdate build_mask_global(const NetworkState& net, const ImportanceScores& scores,
                                    double fraction_of_remaining) {
    detail::check_fraction(fraction_of_remaining);
    scores.validate(net);
    MaskUpdate update = detail::copy_masks(net);
    std::vector<std::pair<std::size_t, std::size_t>> live;  // (layer, flat index)
    std::vector<double> keys;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        if (!net.layers[l].prunable) continue;
        for (std::size_t i = 0; i < net.layers[l].M.size(); ++i)
            if (net.layers[l].M.values()[i] != 0.0) {
                live.emplace_back(l, i);
                keys.push_back(scores.scores[l].values()[i]);
            }
    }
    const auto remove =
        static_cast<std::size_t>(fraction_of_remaining * static_cast<double>(live.size()));
    std::vector<std::size_t> order = argsort_by_key(keys);
    for (std::size_t k = 0; k < remove; ++k) {
        const auto [l, i] = live[order[k]];
        update.new_masks[l].values()[i] = 0.0;
        update.removed_per_layer[l] += 1;
    }
    return update;
}

// Uniform sample without replacement over all live prunable positions.
inline MaskUpdate build_mask_random(RngState& rng, const NetworkState& net,
                                    double fraction_of_remaining) {
    detail::check_fraction(fraction_of_remaining);
    MaskUpdate update = detail::copy_masks(net);
    std::vector<std::pair<std::size_t, std::size_t>> live;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        if (!net.layers[l].prunable) continue;
        for (std::size_t i = 0; i < net.layers[l].M.size(); ++i)
            if (net.layers[l].M.values()[i] != 0.0) live.emplace_back(l, i);
    }
    const auto remove =
        static_cast<std::size_t>(fraction_of_remaining * static_cast<double>(live.size()));
    std::vector<std::size_t> order = shuffled_indices(rng, live.size());
    for (std::size_t k = 0; k < remove; ++k) {
        const auto [l, i] = live[order[k]];
        update.new_masks[l].values()[i] = 0.0;
        update.removed_per_layer[l] += 1;
    }
    return update;
}

// Installs new masks; masks may only lose bits. Weights at newly cleared
// positions are zeroed so removal is permanent.
inline void apply_mask_update(NetworkState& net, const MaskUpdate& update) {
    if (update.new_masks.size() != net.layers.size())
        throw DimensionError("apply_mask_update: layer count mismatch");
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& new_mask = update.new_masks[l];
        if (!new_mask.same_shape(net.layers[l].M))
            throw DimensionError("apply_mask_update: layer " + std::to_string(l) + " shape");
        for (std::size_t i = 0; i < new_mask.size(); ++i) {
            const double old_m = net.layers[l].M.values()[i];
            const double new_m = new_mask.values()[i];
            if (new_m != 0.0 && new_m != 1.0)
                throw ValueError("apply_mask_update: mask entries must be 0 or 1");
            if (old_m == 0.0 && new_m == 1.0)
                throw ValueError("apply_mask_update: mask must be monotone (layer " +
                                 std::to_string(l) + ")");
        }
    }
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto& layer = net.layers[l];
        for (std::size_t i = 0; i < layer.M.size(); ++i) {
            layer.M.values()[i] = update.new_masks[l].values()[i];
            if (layer.M.values()[i] == 0.0) layer.W.values()[i] = 0.0;
        }
    }
    net.bump_version();
}

// ---- hard-concrete stochastic gates ----

struct HardConcreteGate {
    std::vector<DenseMatrix> S;  // log-alpha per weight; empty at non-prunable layers
    double b = 2.0 / 3.0;
    double l = -0.1;
    double r = 1.1;

    void validate() const {
        if (!(b > 0.0)) throw ValueError("hard-concrete: b must be > 0");
        if (!(l < 0.0)) throw ValueError("hard-concrete: l must be < 0");
        if (!(r > 1.0)) throw ValueError("hard-concrete: r must be > 1");
    }
};

inline HardConcreteGate make_gates(const NetworkState& net, double initial_log_alpha = 2.0) {
    HardConcreteGate gate;
    gate.S.resize(net.layers.size());
    for (std::size_t l = 0; l < net.layers.size(); ++l)
        if (net.layers[l].prunable)
            gate.S[l] = DenseMatrix(net.layers[l].W.rows(), net.layers[l].W.cols(),
                                    initial_log_alpha);
    return gate;
}

struct HcSample {
    std::vector<DenseMatrix> mask;         // stretched-and-clamped gate values in [0,1]
    std::vector<DenseMatrix> grad_factor;  // d mask / d S
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// u ~ U(0,1); Sbar = sigmoid((log u - log(1-u) + S)/b); Z = (r-l)Sbar + l;
// mask = clamp(Z, 0, 1); factor = ((r-l)/b) Sbar (1-Sbar) 1{0 <= Z <= 1}.
inline HcSample hc_sample(const HardConcreteGate& gate, RngState& rng) {
    gate.validate();
    HcSample out;
    out.mask.resize(gate.S.size());
    out.grad_factor.resize(gate.S.size());
    for (std::size_t l = 0; l < gate.S.size(); ++l) {
        if (gate.S[l].empty()) continue;
        out.mask[l] = DenseMatrix(gate.S[l].rows(), gate.S[l].cols());
        out.grad_factor[l] = DenseMatrix(gate.S[l].rows(), gate.S[l].cols());
        for (std::size_t i = 0; i < gate.S[l].size(); ++i) {
            double u = rng.next_unit();
            while (u == 0.0) u = rng.next_unit();
            const double logistic_noise = std::log(u) - std::log1p(-u);
            const double sbar = sigmoid((logistic_noise + gate.S[l].values()[i]) / gate.b);
            const double z = (gate.r - gate.l) * sbar + gate.l;
            out.mask[l].values()[i] = std::clamp(z, 0.0, 1.0);
            out.grad_factor[l].values()[i] =
                (z >= 0.0 && z <= 1.0)
                    ? ((gate.r - gate.l) / gate.b) * sbar * (1.0 - sbar)
                    : 0.0;
        }
    }
    return out;
}

// Closed-form expected number of live gates: sum sigmoid(S - b log(-l/r)).
inline double hc_expected_l0(const HardConcreteGate& gate) {
    gate.validate();
    const double shift = gate.b * std::log(-gate.l / gate.r);
    double total = 0.0;
    for (const auto& S : gate.S)
        for (double s : S.values()) total += sigmoid(s - shift);
    return total;
}

// d expected_l0 / d S, per gate.
inline std::vector<DenseMatrix> hc_expected_l0_grad(const HardConcreteGate& gate) {
    gate.validate();
    const double shift = gate.b * std::log(-gate.l / gate.r);
    std::vector<DenseMatrix> grad(gate.S.size());
    for (std::size_t l = 0; l < gate.S.size(); ++l) {
        if (gate.S[l].empty()) continue;
        grad[l] = DenseMatrix(gate.S[l].rows(), gate.S[l].cols());
        for (std::size_t i = 0; i < gate.S[l].size(); ++i) {
            const double p = sigmoid(gate.S[l].values()[i] - shift);
            grad[l].values()[i] = p * (1.0 - p);
        }
    }
    return grad;
}

// Deterministic evaluation mask: clamp((r-l) sigmoid(S) + l, 0, 1). Interior
// values act as soft multipliers; exact zeros mark pruned gates.
inline std::vector<DenseMatrix> hc_test_mask(const HardConcreteGate& gate) {
    gate.validate();
    std::vector<DenseMatrix> mask(gate.S.size());
    for (std::size_t l = 0; l < gate.S.size(); ++l) {
        if (gate.S[l].empty()) continue;
        mask[l] = DenseMatrix(gate.S[l].rows(), gate.S[l].cols());
        for (std::size_t i = 0; i < gate.S[l].size(); ++i)
            mask[l].values()[i] = std::clamp(
                (gate.r - gate.l) * sigmoid(gate.S[l].values()[i]) + gate.l, 0.0, 1.0);
    }
    return mask;
}

// ---- distortion measures ----

// ||W - M.W||_F: root of the squared mass at pruned positions.
inline double frobenius_distortion(const DenseMatrix& W, const DenseMatrix& M) {
    if (!W.same_shape(M))
        throw DimensionError("frobenius_distortion: " + W.shape_str() + " vs " + M.shape_str());
    double sum = 0.0;
    for (std::size_t i = 0; i < W.size(); ++i) {
        const double removed = W.values()[i] * (1.0 - M.values()[i]);
        sum += removed * removed;
    }
    return std::sqrt(sum);
}

inline double total_frobenius_distortion(const NetworkState& pruned,
                                         const NetworkState& reference) {
    if (pruned.layers.size() != reference.layers.size())
        throw DimensionError("total_frobenius_distortion: layer count mismatch");
    double sum = 0.0;
    for (std::size_t l = 0; l < pruned.layers.size(); ++l) {
        DenseMatrix diff = reference.layers[l].W;
        add_scaled(diff, pruned.layers[l].effective_weights(), -1.0);
        const double d = frobenius_norm(diff);
        sum += d * d;
    }
    return std::sqrt(sum);
}

// First-order Taylor estimate of the loss change under perturbation
// delta_theta: g . dtheta + lambda * g_teacher . dtheta.
inline double first_order_loss_change(const std::vector<DenseMatrix>& gradients,
                                      const std::vector<DenseMatrix>& delta_theta,
                                      const std::vector<DenseMatrix>& teacher_gradients,
                                      double lambda) {
    if (gradients.size() != delta_theta.size() ||
        teacher_gradients.size() != delta_theta.size())
        throw DimensionError("first_order_loss_change: layer count mismatch");
    double total = 0.0;
    for (std::size_t l = 0; l < delta_theta.size(); ++l) {
        if (!gradients[l].same_shape(delta_theta[l]) ||
            !teacher_gradients[l].same_shape(delta_theta[l]))
            throw DimensionError("first_order_loss_change: layer " + std::to_string(l) +
                                 " shape mismatch");
        for (std::size_t i = 0; i < delta_theta[l].size(); ++i)
            total += (gradients[l].values()[i] +
                      lambda * teacher_gradients[l].values()[i]) *
                     delta_theta[l].values()[i];
    }
    return total;
}

}  // namespace sdplab
