#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sdplab/dataset.hpp"
#include "sdplab/losses.hpp"
#include "sdplab/network.hpp"
#include "sdplab/pruning.hpp"

namespace sdplab {

enum class LossMode { ce, sdp_kld, sdp_cc, sdp_cos };

inline const char* loss_mode_name(LossMode m) {
    switch (m) {
        case LossMode::ce: return "ce";
        case LossMode::sdp_kld: return "sdp-kld";
        case LossMode::sdp_cc: return "sdp-cc";
        case LossMode::sdp_cos: return "sdp-cos";
    }
    throw ValueError("loss_mode_name: bad enum value");
}

inline LossMode loss_mode_from_name(const std::string& name) {
    if (name == "ce") return LossMode::ce;
    if (name == "sdp-kld") return LossMode::sdp_kld;
    if (name == "sdp-cc") return LossMode::sdp_cc;
    if (name == "sdp-cos") return LossMode::sdp_cos;
    throw ConfigError("unknown loss mode '" + name + "'");
}

enum class ScheduleKind { uniform, cubic };

inline const char* schedule_kind_name(ScheduleKind k) {
    return k == ScheduleKind::uniform ? "uniform" : "cubic";
}

inline ScheduleKind schedule_kind_from_name(const std::string& name) {
    if (name == "uniform") return ScheduleKind::uniform;
    if (name == "cubic") return ScheduleKind::cubic;
    throw ConfigError("unknown schedule kind '" + name + "'");
}

struct ScheduleConfig {
    std::size_t num_prune_steps = 15;
    double fraction_per_step = 0.10;
    std::size_t epochs_per_step = 10;
    ScheduleKind kind = ScheduleKind::uniform;
    double final_density = 0.2;  // cubic target for the remaining-weight fraction

    void validate() const {
        if (num_prune_steps < 1) throw ConfigError("schedule: need at least 1 prune step");
        if (epochs_per_step < 1) throw ConfigError("schedule: need at least 1 epoch per step");
        if (!(fraction_per_step > 0.0 && fraction_per_step < 1.0))
            throw ConfigError("schedule: fraction_per_step must be in (0,1)");
        if (!(final_density > 0.0 && final_density < 1.0))
            throw ConfigError("schedule: final_density must be in (0,1)");
    }
};

// Fraction of the currently remaining weights to prune at a given step.
// Uniform: constant. Cubic: the remaining density follows
// d(t) = s_f + (1 - s_f) * (1 - t/T)^3, so each step removes whatever brings
// the compounded density from d(t-1) down to d(t).
inline double step_fraction(const ScheduleConfig& schedule, std::size_t step_index) {
    schedule.validate();
    if (step_index >= schedule.num_prune_steps)
        throw ValueError("step_fraction: step index out of range");
    if (schedule.kind == ScheduleKind::uniform) return schedule.fraction_per_step;
    const double T = static_cast<double>(schedule.num_prune_steps);
    auto density = [&](double t) {
        const double keep = 1.0 - t / T;
        return schedule.final_density +
               (1.0 - schedule.final_density) * keep * keep * keep;
    };
    const double t = static_cast<double>(step_index + 1);
    return 1.0 - density(t) / density(t - 1.0);
}

struct TrainConfig {
    std::size_t epochs = 40;  // teacher budget; student phases use the schedule
    std::size_t batch_size = 64;
    double learning_rate = 0.05;
    double momentum = 0.9;
    double clip_norm = 1.0;
    double label_smoothing = 0.0;
    std::size_t patience = 5;
    double min_delta = 1e-4;
    double reg_coef = 1e-4;    // weight penalty used by the l1/l2 scoring methods
    double l0_penalty = 1e-3;  // expected-live-count penalty for stochastic gates
    double gate_init = 2.0;    // initial gate log-alpha
    double lambda_fdm = 1.0;   // teacher-anchored distortion trade-off
    bool cache_teacher = false;

    void validate() const {
        if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
        if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
        if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
        if (!(momentum >= 0.0 && momentum < 1.0))
            throw ConfigError("train: momentum must be in [0,1)");
        if (!(clip_norm > 0.0)) throw ConfigError("train: clip_norm must be > 0");
        if (!(label_smoothing >= 0.0 && label_smoothing < 1.0))
            throw ConfigError("train: label_smoothing must be in [0,1)");
        if (reg_coef < 0.0) throw ConfigError("train: reg_coef must be >= 0");
        if (l0_penalty < 0.0) throw ConfigError("train: l0_penalty must be >= 0");
        if (lambda_fdm < 0.0) throw ConfigError("train: lambda_fdm must be >= 0");
    }
};

struct EvalResult {
    double accuracy = 0.0;
    double mean_loss = 0.0;
};

// Deterministic full-split pass: plain cross-entropy and argmax accuracy.
inline EvalResult evaluate(const NetworkState& net, const LabeledDataset& ds) {
    ds.validate();
    ForwardTrace trace = forward(net, ds.inputs);
    const DenseMatrix& logits = trace.logits();
    CeResult ce = cross_entropy(logits, ds.labels, 0.0);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < logits.rows(); ++i)
        if (argmax_row(logits, i) == ds.labels[i]) ++hits;
    return {static_cast<double>(hits) / static_cast<double>(logits.rows()), ce.loss};
}

namespace detail {

// Shuffled index chunks with the same semantics as minibatches: a trailing
// chunk of fewer than two rows is dropped.
inline std::vector<std::vector<std::size_t>> index_batches(std::size_t n,
                                                           std::size_t batch_size,
                                                           RngState& rng) {
    std::vector<std::size_t> order = shuffled_indices(rng, n);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t stop = std::min(n, start + batch_size);
        if (stop - start < 2) break;
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(stop));
    }
    return out;
}

inline DenseMatrix gather_rows(const DenseMatrix& m, const std::vector<std::size_t>& rows) {
    DenseMatrix out(rows.size(), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(rows[i], j);
    return out;
}

inline std::vector<std::size_t> gather_labels(const std::vector<std::size_t>& labels,
                                              const std::vector<std::size_t>& rows) {
    std::vector<std::size_t> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(labels[r]);
    return out;
}

}  // namespace detail

struct TeacherEpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double dev_accuracy = 0.0;
};

struct TeacherResult {
    std::vector<TeacherEpochRecord> epochs;
    double best_dev_accuracy = 0.0;
    bool stopped_early = false;
};

// Plain cross-entropy training with dev-accuracy early stopping. The network
// is trained in place; snapshot_teacher gives the frozen copy.
inline TeacherResult train_teacher(RngState& rng, NetworkState& net,
                                   const LabeledDataset& train, const LabeledDataset& dev,
                                   const TrainConfig& cfg) {
    cfg.validate();
    net.validate();
    train.validate();
    dev.validate();
    for (const auto& layer : net.layers)
        for (double m : layer.M.values())
            if (m != 1.0) throw ValueError("train_teacher: network is already masked");

    TeacherResult result;
    OptimizerState opt{cfg.learning_rate, cfg.momentum, cfg.clip_norm};
    double best = -1.0;
    std::size_t since_improve = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto batches = detail::index_batches(train.size(), cfg.batch_size, rng);
        double loss_sum = 0.0;
        for (const auto& rows : batches) {
            DenseMatrix x = detail::gather_rows(train.inputs, rows);
            const auto labels = detail::gather_labels(train.labels, rows);
            ForwardTrace trace = forward(net, x);
            CeResult ce = cross_entropy(trace.logits(), labels, cfg.label_smoothing);
            if (!std::isfinite(ce.loss))
                throw DivergenceError("teacher loss became non-finite at epoch " +
                                      std::to_string(epoch));
            loss_sum += ce.loss;
            sgd_step(net, opt, backward(net, trace, ce.dlogits));
        }
        EvalResult ev = evaluate(net, dev);
        result.epochs.push_back({epoch, loss_sum / static_cast<double>(batches.size()),
                                 ev.accuracy});
        if (ev.accuracy > best + cfg.min_delta) {
            best = ev.accuracy;
            since_improve = 0;
        } else if (++since_improve >= cfg.patience) {
            result.stopped_early = true;
            break;
        }
    }
    result.best_dev_accuracy = best;
    return result;
}

struct EpochRecord {
    std::size_t step = 0;  // training phase index; phase t precedes prune step t
    std::size_t epoch = 0;
    double loss_total = 0.0;
    double loss_ce = 0.0;
    double loss_kld = 0.0;
    double loss_cc = 0.0;
    double loss_cos = 0.0;
    double dev_accuracy = 0.0;
};

struct StepRecord {
    std::size_t step = 0;
    double fraction = 0.0;
    double pre_prune_accuracy = 0.0;
    double post_prune_accuracy = 0.0;
    double post_retrain_accuracy = 0.0;  // filled after the next training phase
    std::size_t recovery_epochs = 0;     // epochs_per_step + 1 when unrecovered
    bool recovered = false;
    double remaining_fraction = 1.0;
    std::vector<std::size_t> removed_per_layer;
    std::vector<std::size_t> skipped_layers;
};

struct RunRecord {
    PruneMethod method = PruneMethod::mbp;
    LossMode loss_mode = LossMode::ce;
    std::vector<EpochRecord> epochs;
    std::vector<StepRecord> steps;
    std::uint64_t teacher_queries = 0;
    std::vector<std::string> events;
};

using StepObserver =
    std::function<void(const NetworkState& student, const RunRecord& record, std::size_t step)>;

namespace detail {

struct TeacherOutputs {
    DenseMatrix logits;
    DenseMatrix penultimate;
};

inline TeacherOutputs teacher_batch_outputs(const NetworkState& teacher, const DenseMatrix& x) {
    ForwardTrace t = forward(teacher, x);
    return {t.logits(), t.penultimate()};
}

inline ObjectiveResult batch_objective(LossMode mode, const ForwardTrace& trace,
                                       const std::vector<std::size_t>& labels,
                                       const TeacherOutputs* teacher_out,
                                       const LossWeights& weights, double label_smoothing) {
    switch (mode) {
        case LossMode::ce: {
            CeResult ce = cross_entropy(trace.logits(), labels, label_smoothing);
            ObjectiveResult res;
            res.total = ce.loss;
            res.ce = ce.loss;
            res.dlogits = std::move(ce.dlogits);
            return res;
        }
        case LossMode::sdp_kld:
            return sdp_kld_objective(trace.logits(), teacher_out->logits, labels, weights);
        case LossMode::sdp_cc:
            return sdp_cc_objective(trace.logits(), teacher_out->logits, trace.penultimate(),
                                    teacher_out->penultimate, labels, weights,
                                    /*skip_dead_columns=*/true);
        case LossMode::sdp_cos:
            return sdp_cos_objective(trace.logits(), labels, trace.penultimate(),
                                     teacher_out->penultimate, weights,
                                     /*skip_degenerate_rows=*/true);
    }
    throw ValueError("batch_objective: bad loss mode");
}

inline MaskUpdate build_step_mask(RngState& rng, const NetworkState& student,
                                  const NetworkState& teacher, PruneMethod method,
                                  double fraction, const TrainConfig& cfg,
                                  const LabeledDataset& train,
                                  const HardConcreteGate* gate) {
    switch (method) {
        case PruneMethod::random:
            return build_mask_random(rng, student, fraction);
        case PruneMethod::mbp:
        case PruneMethod::l1_mbp:
        case PruneMethod::l2_mbp:
            return build_mask_layerwise(student, score_magnitude(student), fraction);
        case PruneMethod::global_mbp:
            return build_mask_global(student, score_magnitude(student), fraction);
        case PruneMethod::gradient_mbp:
            return build_mask_layerwise(
                student, score_gradient(student, {LabeledBatch{train.inputs, train.labels}}),
                fraction);
        case PruneMethod::taylor:
            return build_mask_layerwise(
                student, score_taylor(student, {LabeledBatch{train.inputs, train.labels}}),
                fraction);
        case PruneMethod::lookahead:
            return build_mask_layerwise(student, score_lookahead(student), fraction);
        case PruneMethod::lamp:
            return build_mask_global(student, score_lamp(student), fraction);
        case PruneMethod::fdm_sdp:
            return build_mask_layerwise(
                student, score_fdm_sdp(student, teacher, cfg.lambda_fdm), fraction);
        case PruneMethod::l0: {
            // Gate-driven: permanently mask weights whose deterministic test
            // mask is closed. A layer the gates would empty is left alone.
            MaskUpdate update = copy_masks(student);
            update.removed_per_layer.assign(student.layers.size(), 0);
            const auto test = hc_test_mask(*gate);
            for (std::size_t l = 0; l < student.layers.size(); ++l) {
                if (!student.layers[l].prunable) continue;
                std::size_t live_after = 0;
                for (std::size_t i = 0; i < student.layers[l].M.size(); ++i)
                    if (student.layers[l].M.values()[i] == 1.0 && test[l].values()[i] > 0.0)
                        ++live_after;
                if (live_after == 0) {
                    update.skipped_layers.push_back(l);
                    continue;
                }
                for (std::size_t i = 0; i < student.layers[l].M.size(); ++i)
                    if (student.layers[l].M.values()[i] == 1.0 && test[l].values()[i] == 0.0) {
                        update.new_masks[l].values()[i] = 0.0;
                        ++update.removed_per_layer[l];
                    }
            }
            return update;
        }
    }
    throw ValueError("build_step_mask: bad prune method");
}

}  // namespace detail

struct PruneRunResult {
    RunRecord record;
    NetworkState student;
};

// Alg. pattern: starting from an exact teacher copy, alternate a training
// phase under the chosen loss mode with a prune step, then run one trailing
// phase so the last step's recovery is observable. Per prune step the record
// holds dev accuracy before pruning, immediately after, and after the next
// phase's retraining, plus the epochs needed to regain 95% of the post-prune
// accuracy drop (epochs_per_step + 1 when never regained).
inline PruneRunResult iterative_prune(RngState& rng, const NetworkState& teacher,
                                      const LabeledDataset& train, const LabeledDataset& dev,
                                      PruneMethod method, LossMode mode,
                                      const ScheduleConfig& schedule, const TrainConfig& cfg,
                                      const LossWeights& weights,
                                      const StepObserver& observer = {}) {
    schedule.validate();
    cfg.validate();
    weights.validate();
    teacher.validate();
    train.validate();
    dev.validate();

    PruneRunResult out;
    out.record.method = method;
    out.record.loss_mode = mode;
    out.student = teacher;
    out.student.role = Role::student;
    NetworkState& student = out.student;
    RunRecord& record = out.record;

    OptimizerState opt{cfg.learning_rate, cfg.momentum, cfg.clip_norm};
    const RegKind reg = method == PruneMethod::l1_mbp  ? RegKind::l1
                        : method == PruneMethod::l2_mbp ? RegKind::l2
                                                        : RegKind::none;
    HardConcreteGate gate;
    if (method == PruneMethod::l0) gate = make_gates(student, cfg.gate_init);

    const bool needs_teacher = mode != LossMode::ce;
    detail::TeacherOutputs full_teacher;
    if (needs_teacher && cfg.cache_teacher)
        full_teacher = detail::teacher_batch_outputs(teacher, train.inputs);

    const std::size_t T = schedule.num_prune_steps;
    for (std::size_t phase = 0; phase <= T; ++phase) {
        double last_dev = 0.0;
        for (std::size_t epoch = 0; epoch < schedule.epochs_per_step; ++epoch) {
            const auto batches = detail::index_batches(train.size(), cfg.batch_size, rng);
            EpochRecord er;
            er.step = phase;
            er.epoch = epoch;
            for (const auto& rows : batches) {
                DenseMatrix x = detail::gather_rows(train.inputs, rows);
                const auto labels = detail::gather_labels(train.labels, rows);

                detail::TeacherOutputs tout;
                if (needs_teacher) {
                    if (cfg.cache_teacher) {
                        tout.logits = detail::gather_rows(full_teacher.logits, rows);
                        tout.penultimate =
                            detail::gather_rows(full_teacher.penultimate, rows);
                    } else {
                        tout = detail::teacher_batch_outputs(teacher, x);
                    }
                    ++record.teacher_queries;
                }

                HcSample sample;
                NetworkState scratch;
                const bool gated = method == PruneMethod::l0;
                if (gated) {
                    sample = hc_sample(gate, rng);
                    scratch = student;
                    for (std::size_t l = 0; l < scratch.layers.size(); ++l)
                        if (scratch.layers[l].prunable)
                            scratch.layers[l].W = hadamard(scratch.layers[l].W,
                                                           sample.mask[l]);
                }
                const NetworkState& net_used = gated ? scratch : student;

                ForwardTrace trace = forward(net_used, x);
                ObjectiveResult obj = detail::batch_objective(
                    mode, trace, labels, needs_teacher ? &tout : nullptr, weights,
                    cfg.label_smoothing);
                if (!std::isfinite(obj.total))
                    throw DivergenceError("student loss became non-finite at phase " +
                                          std::to_string(phase) + ", epoch " +
                                          std::to_string(epoch));
                Gradients grads = backward(net_used, trace, obj.dlogits,
                                           obj.has_drep ? &obj.drep : nullptr);

                if (reg != RegKind::none) {
                    RegResult r = weight_reg(student, reg, cfg.reg_coef);
                    obj.total += r.loss;
                    for (std::size_t l = 0; l < grads.size(); ++l)
                        add_scaled(grads[l].dW, r.dW[l], 1.0);
                }

                if (gated) {
                    obj.total += cfg.l0_penalty * hc_expected_l0(gate);
                    const auto l0_grad = hc_expected_l0_grad(gate);
                    for (std::size_t l = 0; l < student.layers.size(); ++l) {
                        if (!student.layers[l].prunable) continue;
                        for (std::size_t i = 0; i < gate.S[l].size(); ++i) {
                            const double data_term = grads[l].dW.values()[i] *
                                                     student.layers[l].W.values()[i] *
                                                     sample.grad_factor[l].values()[i];
                            const double dS = data_term +
                                              cfg.l0_penalty * l0_grad[l].values()[i];
                            gate.S[l].values()[i] -= cfg.learning_rate * dS;
                        }
                        // Chain the weight gradient through the sampled gate.
                        grads[l].dW = hadamard(grads[l].dW, sample.mask[l]);
                    }
                }

                er.loss_total += obj.total;
                er.loss_ce += obj.ce;
                er.loss_kld += obj.kld;
                er.loss_cc += obj.cc;
                er.loss_cos += obj.cosine;
                sgd_step(student, opt, std::move(grads));
            }
            const double inv = 1.0 / static_cast<double>(batches.size());
            er.loss_total *= inv;
            er.loss_ce *= inv;
            er.loss_kld *= inv;
            er.loss_cc *= inv;
            er.loss_cos *= inv;
            er.dev_accuracy = evaluate(student, dev).accuracy;
            last_dev = er.dev_accuracy;
            record.epochs.push_back(er);

            if (phase >= 1) {
                StepRecord& prev = record.steps[phase - 1];
                // Recovered once 95% of the post-prune accuracy drop is regained;
                // with no drop the bar is the pre-prune accuracy itself.
                const double drop =
                    std::max(0.0, prev.pre_prune_accuracy - prev.post_prune_accuracy);
                if (!prev.recovered &&
                    er.dev_accuracy >= prev.pre_prune_accuracy - 0.05 * drop) {
                    prev.recovered = true;
                    prev.recovery_epochs = epoch + 1;
                }
            }
        }
        if (phase >= 1) record.steps[phase - 1].post_retrain_accuracy = last_dev;
        if (phase == T) break;

        StepRecord sr;
        sr.step = phase;
        sr.fraction = step_fraction(schedule, phase);
        sr.pre_prune_accuracy = last_dev;
        sr.recovery_epochs = schedule.epochs_per_step + 1;

        MaskUpdate update = detail::build_step_mask(rng, student, teacher, method,
                                                    sr.fraction, cfg, train,
                                                    method == PruneMethod::l0 ? &gate : nullptr);
        apply_mask_update(student, update);
        sr.post_prune_accuracy = evaluate(student, dev).accuracy;
        sr.remaining_fraction = count_remaining(student).fraction;
        sr.removed_per_layer = update.removed_per_layer;
        sr.skipped_layers = update.skipped_layers;
        for (std::size_t l : update.skipped_layers)
            record.events.push_back("step " + std::to_string(phase) + ": layer " +
                                    std::to_string(l) +
                                    " skipped (too few live weights)");
        record.steps.push_back(std::move(sr));
        if (observer) observer(student, record, phase);
    }
    return out;
}

namespace detail {

inline std::string format_g17(double v) {
    char buf[64];
    auto [ptr, ec] =
        std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, ptr);
}

}  // namespace detail

// Stable text form of a whole run; byte-identical for identical (seed, config).
inline std::string serialize_run_record(const RunRecord& r) {
    std::ostringstream out;
    out << "run-record v1\n";
    out << "method " << prune_method_name(r.method) << '\n';
    out << "loss_mode " << loss_mode_name(r.loss_mode) << '\n';
    out << "teacher_queries " << r.teacher_queries << '\n';
    out << "epochs " << r.epochs.size() << '\n';
    for (const auto& e : r.epochs)
        out << "epoch " << e.step << ' ' << e.epoch << ' '
            << detail::format_g17(e.loss_total) << ' ' << detail::format_g17(e.loss_ce)
            << ' ' << detail::format_g17(e.loss_kld) << ' ' << detail::format_g17(e.loss_cc)
            << ' ' << detail::format_g17(e.loss_cos) << ' '
            << detail::format_g17(e.dev_accuracy) << '\n';
    out << "steps " << r.steps.size() << '\n';
    for (const auto& s : r.steps) {
        out << "step " << s.step << ' ' << detail::format_g17(s.fraction) << ' '
            << detail::format_g17(s.pre_prune_accuracy) << ' '
            << detail::format_g17(s.post_prune_accuracy) << ' '
            << detail::format_g17(s.post_retrain_accuracy) << ' ' << s.recovery_epochs
            << ' ' << (s.recovered ? 1 : 0) << ' '
            << detail::format_g17(s.remaining_fraction) << " removed";
        for (std::size_t v : s.removed_per_layer) out << ' ' << v;
        out << " skipped";
        for (std::size_t v : s.skipped_layers) out << ' ' << v;
        out << '\n';
    }
    out << "events " << r.events.size() << '\n';
    for (const auto& e : r.events) out << "event " << e << '\n';
    return out.str();
}

}  // namespace sdplab
