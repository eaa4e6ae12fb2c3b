#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "sdplab/errors.hpp"
#include "sdplab/matrix.hpp"
#include "sdplab/network.hpp"

namespace sdplab {

enum class KldCoefficientMode { eq1_style, literal_eq3 };

struct LossWeights {
    double alpha = 0.5;
    double beta = 2e-5;
    double lambda_offdiag = 5e-3;
    double temperature = 0.9;
    double label_smoothing = 0.0;
    KldCoefficientMode kld_mode = KldCoefficientMode::eq1_style;

    void validate() const {
        if (alpha < 0.0 || alpha > 1.0) throw ValueError("loss weights: alpha must be in [0,1]");
        if (beta < 0.0) throw ValueError("loss weights: beta must be >= 0");
        if (lambda_offdiag < 0.0) throw ValueError("loss weights: lambda must be >= 0");
        if (!(temperature > 0.0)) throw ValueError("loss weights: temperature must be > 0");
        if (label_smoothing < 0.0 || label_smoothing >= 1.0)
            throw ValueError("loss weights: label smoothing must be in [0,1)");
    }

    double kld_coefficient() const {
        return kld_mode == KldCoefficientMode::eq1_style ? alpha * temperature * temperature
                                                         : alpha * alpha;
    }
};

namespace detail {

// Row-wise log-softmax of logits/tau, computed against the row max.
inline DenseMatrix log_softmax(const DenseMatrix& logits, double tau) {
    DenseMatrix out(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < logits.cols(); ++j)
            mx = std::max(mx, logits(i, j) / tau);
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j)
            sum += std::exp(logits(i, j) / tau - mx);
        const double lse = mx + std::log(sum);
        for (std::size_t j = 0; j < logits.cols(); ++j) out(i, j) = logits(i, j) / tau - lse;
    }
    return out;
}

constexpr double kDeadColumnNorm = 1e-6;
constexpr double kDegenerateRowNorm = 1e-12;

}  // namespace detail

struct CeResult {
    double loss = 0.0;
    DenseMatrix dlogits;
};

// Batch-mean cross-entropy against smoothed targets (1-eps)*onehot + eps/C.
// Per-row logit gradient is (q - target)/batch.
inline CeResult cross_entropy(const DenseMatrix& logits, const std::vector<std::size_t>& labels,
                              double label_smoothing = 0.0) {
    if (labels.size() != logits.rows())
        throw DimensionError("cross_entropy: " + std::to_string(labels.size()) +
                             " labels for " + std::to_string(logits.rows()) + " rows");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0)
        throw ValueError("cross_entropy: label smoothing must be in [0,1)");
    const std::size_t B = logits.rows(), C = logits.cols();
    for (std::size_t y : labels)
        if (y >= C) throw ValueError("cross_entropy: label out of range");

    DenseMatrix logq = detail::log_softmax(logits, 1.0);
    CeResult res;
    res.dlogits = DenseMatrix(B, C);
    const double off = label_smoothing / static_cast<double>(C);
    for (std::size_t i = 0; i < B; ++i) {
        for (std::size_t j = 0; j < C; ++j) {
            const double target = off + (labels[i] == j ? 1.0 - label_smoothing : 0.0);
            res.loss -= target * logq(i, j);
            res.dlogits(i, j) = (std::exp(logq(i, j)) - target) / static_cast<double>(B);
        }
    }
    res.loss /= static_cast<double>(B);
    return res;
}

struct KldResult {
    double loss = 0.0;
    DenseMatrix dstudent_logits;
};

// Batch-mean KL(teacher || student) at temperature tau, both logit sets
// divided by tau before softmax. Teacher is a constant.
inline KldResult kld_distillation(const DenseMatrix& student_logits,
                                  const DenseMatrix& teacher_logits, double tau) {
    if (!(tau > 0.0)) throw ValueError("kld_distillation: temperature must be > 0");
    if (!student_logits.same_shape(teacher_logits))
        throw DimensionError("kld_distillation: student " + student_logits.shape_str() +
                             " vs teacher " + teacher_logits.shape_str());
    const std::size_t B = student_logits.rows(), C = student_logits.cols();
    DenseMatrix logq = detail::log_softmax(student_logits, tau);
    DenseMatrix logp = detail::log_softmax(teacher_logits, tau);

    KldResult res;
    res.dstudent_logits = DenseMatrix(B, C);
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < C; ++j) {
            const double p = std::exp(logp(i, j));
            res.loss += p * (logp(i, j) - logq(i, j));
            res.dstudent_logits(i, j) =
                (std::exp(logq(i, j)) - p) / (tau * static_cast<double>(B));
        }
    res.loss /= static_cast<double>(B);
    return res;
}

// Splits KL(p||q) = sum p log p - sum p log q into its two batch-mean terms.
inline std::pair<double, double> kld_decomposition(const DenseMatrix& teacher_probs,
                                                   const DenseMatrix& student_probs) {
    if (!teacher_probs.same_shape(student_probs))
        throw DimensionError("kld_decomposition: shape mismatch");
    const std::size_t B = teacher_probs.rows(), C = teacher_probs.cols();
    if (B == 0) throw ValueError("kld_decomposition: empty batch");
    double entropic = 0.0, kd = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
        double p_sum = 0.0, q_sum = 0.0;
        for (std::size_t j = 0; j < C; ++j) {
            const double p = teacher_probs(i, j), q = student_probs(i, j);
            if (p < 0.0 || q < 0.0) throw ValueError("kld_decomposition: negative probability");
            p_sum += p;
            q_sum += q;
            if (p == 0.0) continue;
            if (q == 0.0)
                throw ValueError("kld_decomposition: student assigns zero mass where teacher "
                                 "does not (infinite divergence)");
            entropic += p * std::log(p);
            kd += p * std::log(q);
        }
        if (std::abs(p_sum - 1.0) > 1e-6 || std::abs(q_sum - 1.0) > 1e-6)
            throw ValueError("kld_decomposition: rows must sum to 1");
    }
    return {entropic / static_cast<double>(B), kd / static_cast<double>(B)};
}

struct Standardization {
    DenseMatrix Z;
    std::vector<double> inv_std;  // per column, 1/sqrt(var + 1e-5)
};

// Column-wise zero-mean unit-std transform with population variance and a
// 1e-5 stabilizer under the square root. No learned affine terms.
inline Standardization batch_standardize(const DenseMatrix& X) {
    const std::size_t B = X.rows(), D = X.cols();
    if (B < 2) throw ValueError("batch_standardize: need at least 2 rows");
    Standardization out;
    out.Z = DenseMatrix(B, D);
    out.inv_std.resize(D);
    for (std::size_t j = 0; j < D; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < B; ++i) mean += X(i, j);
        mean /= static_cast<double>(B);
        double var = 0.0;
        for (std::size_t i = 0; i < B; ++i) {
            const double d = X(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(B);
        out.inv_std[j] = 1.0 / std::sqrt(var + 1e-5);
        for (std::size_t i = 0; i < B; ++i) out.Z(i, j) = (X(i, j) - mean) * out.inv_std[j];
    }
    return out;
}

// Exact reverse pass of batch_standardize:
// dX = inv_std * (dZ - mean(dZ) - Z * mean(dZ o Z)), per column.
inline DenseMatrix standardize_backward(const Standardization& s, const DenseMatrix& dZ) {
    if (!dZ.same_shape(s.Z)) throw DimensionError("standardize_backward: shape mismatch");
    const std::size_t B = s.Z.rows(), D = s.Z.cols();
    DenseMatrix dX(B, D);
    for (std::size_t j = 0; j < D; ++j) {
        double g_mean = 0.0, gz_mean = 0.0;
        for (std::size_t i = 0; i < B; ++i) {
            g_mean += dZ(i, j);
            gz_mean += dZ(i, j) * s.Z(i, j);
        }
        g_mean /= static_cast<double>(B);
        gz_mean /= static_cast<double>(B);
        for (std::size_t i = 0; i < B; ++i)
            dX(i, j) = s.inv_std[j] * (dZ(i, j) - g_mean - s.Z(i, j) * gz_mean);
    }
    return dX;
}

// C_ij = sum_m Zs[m,i] Zt[m,j] / (||Zs col i|| * ||Zt col j||).
inline DenseMatrix cross_correlation(const DenseMatrix& Zs, const DenseMatrix& Zt) {
    if (!Zs.same_shape(Zt))
        throw DimensionError("cross_correlation: " + Zs.shape_str() + " vs " + Zt.shape_str());
    const std::size_t B = Zs.rows(), D = Zs.cols();
    if (B < 2) throw ValueError("cross_correlation: need at least 2 rows");

    std::vector<double> a(D, 0.0), b(D, 0.0);
    for (std::size_t j = 0; j < D; ++j) {
        for (std::size_t i = 0; i < B; ++i) {
            a[j] += Zs(i, j) * Zs(i, j);
            b[j] += Zt(i, j) * Zt(i, j);
        }
        a[j] = std::sqrt(a[j]);
        b[j] = std::sqrt(b[j]);
        if (a[j] < detail::kDeadColumnNorm || b[j] < detail::kDeadColumnNorm)
            throw ValueError("cross_correlation: zero-norm column " + std::to_string(j));
    }
    DenseMatrix C(D, D);
    for (std::size_t i = 0; i < D; ++i)
        for (std::size_t j = 0; j < D; ++j) {
            double dot = 0.0;
            for (std::size_t m = 0; m < B; ++m) dot += Zs(m, i) * Zt(m, j);
            C(i, j) = dot / (a[i] * b[j]);
        }
    return C;
}

struct CcValue {
    double loss = 0.0;
    DenseMatrix dC;
};

// sum_i (1 - C_ii)^2 + lambda * sum_{i != j} C_ij^2.
inline CcValue cc_loss(const DenseMatrix& C, double lambda) {
    if (C.rows() != C.cols()) throw DimensionError("cc_loss: matrix must be square");
    if (lambda < 0.0) throw ValueError("cc_loss: lambda must be >= 0");
    CcValue res;
    res.dC = DenseMatrix(C.rows(), C.cols());
    for (std::size_t i = 0; i < C.rows(); ++i)
        for (std::size_t j = 0; j < C.cols(); ++j) {
            if (i == j) {
                const double d = 1.0 - C(i, i);
                res.loss += d * d;
                res.dC(i, i) = -2.0 * d;
            } else {
                res.loss += lambda * C(i, j) * C(i, j);
                res.dC(i, j) = 2.0 * lambda * C(i, j);
            }
        }
    return res;
}

struct RepLossResult {
    double loss = 0.0;
    DenseMatrix drep;  // gradient with respect to the raw student representation
    DenseMatrix C;     // correlation matrix, zero at excluded coordinates
};

// Full decorrelation objective on raw representations: standardize both,
// correlate, weight diagonal and off-diagonal terms, and push the exact
// gradient back through standardization to the student side only.
//
// skip_dead_columns excludes feature coordinates whose standardized column
// norm vanishes on either side (units with constant activation over the
// batch, e.g. fully pruned ones); without it such columns are an error.
inline RepLossResult representation_cc_loss(const DenseMatrix& h_s, const DenseMatrix& h_t,
                                            double lambda, bool skip_dead_columns = false) {
    if (!h_s.same_shape(h_t))
        throw DimensionError("representation_cc_loss: " + h_s.shape_str() + " vs " +
                             h_t.shape_str());
    if (lambda < 0.0) throw ValueError("representation_cc_loss: lambda must be >= 0");
    Standardization ss = batch_standardize(h_s);
    Standardization st = batch_standardize(h_t);
    const std::size_t B = h_s.rows(), D = h_s.cols();

    std::vector<double> a(D, 0.0), b(D, 0.0);
    std::vector<bool> live(D, true);
    for (std::size_t j = 0; j < D; ++j) {
        for (std::size_t i = 0; i < B; ++i) {
            a[j] += ss.Z(i, j) * ss.Z(i, j);
            b[j] += st.Z(i, j) * st.Z(i, j);
        }
        a[j] = std::sqrt(a[j]);
        b[j] = std::sqrt(b[j]);
        if (a[j] < detail::kDeadColumnNorm || b[j] < detail::kDeadColumnNorm) {
            if (!skip_dead_columns)
                throw ValueError("representation_cc_loss: zero-norm column " +
                                 std::to_string(j));
            live[j] = false;
        }
    }

    RepLossResult res;
    res.C = DenseMatrix(D, D);
    DenseMatrix G(D, D);  // d loss / d C
    for (std::size_t i = 0; i < D; ++i) {
        if (!live[i]) continue;
        for (std::size_t j = 0; j < D; ++j) {
            if (!live[j]) continue;
            double dot = 0.0;
            for (std::size_t m = 0; m < B; ++m) dot += ss.Z(m, i) * st.Z(m, j);
            const double c = dot / (a[i] * b[j]);
            res.C(i, j) = c;
            if (i == j) {
                const double d = 1.0 - c;
                res.loss += d * d;
                G(i, j) = -2.0 * d;
            } else {
                res.loss += lambda * c * c;
                G(i, j) = 2.0 * lambda * c;
            }
        }
    }

    // dC_ij/dZs[m,i] = Zt[m,j]/(a_i b_j) - C_ij Zs[m,i]/a_i^2
    DenseMatrix dZs(B, D);
    for (std::size_t i = 0; i < D; ++i) {
        if (!live[i]) continue;
        double gc = 0.0;  // sum_j G_ij C_ij
        for (std::size_t j = 0; j < D; ++j)
            if (live[j]) gc += G(i, j) * res.C(i, j);
        for (std::size_t m = 0; m < B; ++m) {
            double acc = 0.0;
            for (std::size_t j = 0; j < D; ++j)
                if (live[j]) acc += G(i, j) * st.Z(m, j) / b[j];
            dZs(m, i) = acc / a[i] - gc * ss.Z(m, i) / (a[i] * a[i]);
        }
    }
    res.drep = standardize_backward(ss, dZs);
    return res;
}

struct CosineResult {
    double loss = 0.0;
    DenseMatrix drep;
};

// Batch mean of 1 - cos(h_s row, h_t row); gradient to the student rows only.
// skip_degenerate_rows drops rows where either side has vanishing norm
// (otherwise an error).
inline CosineResult cosine_loss(const DenseMatrix& h_s, const DenseMatrix& h_t,
                                bool skip_degenerate_rows = false) {
    if (!h_s.same_shape(h_t))
        throw DimensionError("cosine_loss: " + h_s.shape_str() + " vs " + h_t.shape_str());
    const std::size_t B = h_s.rows(), D = h_s.cols();
    if (B == 0) throw ValueError("cosine_loss: empty batch");

    CosineResult res;
    res.drep = DenseMatrix(B, D);
    std::vector<std::size_t> rows;
    rows.reserve(B);
    for (std::size_t m = 0; m < B; ++m) {
        double ns = 0.0, nt = 0.0;
        for (std::size_t j = 0; j < D; ++j) {
            ns += h_s(m, j) * h_s(m, j);
            nt += h_t(m, j) * h_t(m, j);
        }
        if (std::sqrt(ns) < detail::kDegenerateRowNorm ||
            std::sqrt(nt) < detail::kDegenerateRowNorm) {
            if (!skip_degenerate_rows)
                throw ValueError("cosine_loss: zero-norm row " + std::to_string(m));
            continue;
        }
        rows.push_back(m);
    }
    if (rows.empty()) return res;

    const double inv_n = 1.0 / static_cast<double>(rows.size());
    for (std::size_t m : rows) {
        double dot = 0.0, ns = 0.0, nt = 0.0;
        for (std::size_t j = 0; j < D; ++j) {
            dot += h_s(m, j) * h_t(m, j);
            ns += h_s(m, j) * h_s(m, j);
            nt += h_t(m, j) * h_t(m, j);
        }
        ns = std::sqrt(ns);
        nt = std::sqrt(nt);
        const double cos = dot / (ns * nt);
        res.loss += (1.0 - cos) * inv_n;
        for (std::size_t j = 0; j < D; ++j)
            res.drep(m, j) =
                -inv_n * (h_t(m, j) / (ns * nt) - cos * h_s(m, j) / (ns * ns));
    }
    return res;
}

struct ObjectiveResult {
    double total = 0.0;
    double ce = 0.0;
    double kld = 0.0;
    double cc = 0.0;
    double cosine = 0.0;
    DenseMatrix dlogits;
    DenseMatrix drep;
    bool has_drep = false;
};

// (1 - alpha) * CE + alpha * tau^2 * KLD.
inline ObjectiveResult sdp_kld_objective(const DenseMatrix& student_logits,
                                         const DenseMatrix& teacher_logits,
                                         const std::vector<std::size_t>& labels,
                                         const LossWeights& w) {
    w.validate();
    CeResult ce = cross_entropy(student_logits, labels, 0.0);
    KldResult kld = kld_distillation(student_logits, teacher_logits, w.temperature);
    const double kld_coef = w.alpha * w.temperature * w.temperature;

    ObjectiveResult res;
    res.ce = ce.loss;
    res.kld = kld.loss;
    res.total = (1.0 - w.alpha) * ce.loss + kld_coef * kld.loss;
    res.dlogits = DenseMatrix(student_logits.rows(), student_logits.cols());
    for (std::size_t i = 0; i < res.dlogits.size(); ++i)
        res.dlogits.values()[i] = (1.0 - w.alpha) * ce.dlogits.values()[i] +
                                  kld_coef * kld.dstudent_logits.values()[i];
    return res;
}

// (1 - alpha) * CE + kappa * KLD + beta * CC, where kappa is alpha*tau^2 in
// eq1-style mode and alpha^2 in literal-eq3 mode. Representation gradient
// flows to the student penultimate activation.
inline ObjectiveResult sdp_cc_objective(const DenseMatrix& student_logits,
                                        const DenseMatrix& teacher_logits,
                                        const DenseMatrix& h_s, const DenseMatrix& h_t,
                                        const std::vector<std::size_t>& labels,
                                        const LossWeights& w, bool skip_dead_columns = false) {
    w.validate();
    CeResult ce = cross_entropy(student_logits, labels, 0.0);
    KldResult kld = kld_distillation(student_logits, teacher_logits, w.temperature);
    RepLossResult cc = representation_cc_loss(h_s, h_t, w.lambda_offdiag, skip_dead_columns);
    const double kld_coef = w.kld_coefficient();

    ObjectiveResult res;
    res.ce = ce.loss;
    res.kld = kld.loss;
    res.cc = cc.loss;
    res.total = (1.0 - w.alpha) * ce.loss + kld_coef * kld.loss + w.beta * cc.loss;
    res.dlogits = DenseMatrix(student_logits.rows(), student_logits.cols());
    for (std::size_t i = 0; i < res.dlogits.size(); ++i)
        res.dlogits.values()[i] = (1.0 - w.alpha) * ce.dlogits.values()[i] +
                                  kld_coef * kld.dstudent_logits.values()[i];
    res.drep = cc.drep;
    scale_inplace(res.drep, w.beta);
    res.has_drep = true;
    return res;
}

// alpha * CE + beta * (1 - cosine similarity); no distillation KLD term.
inline ObjectiveResult sdp_cos_objective(const DenseMatrix& student_logits,
                                         const std::vector<std::size_t>& labels,
                                         const DenseMatrix& h_s, const DenseMatrix& h_t,
                                         const LossWeights& w,
                                         bool skip_degenerate_rows = false) {
    w.validate();
    CeResult ce = cross_entropy(student_logits, labels, 0.0);
    CosineResult cos = cosine_loss(h_s, h_t, skip_degenerate_rows);

    ObjectiveResult res;
    res.ce = ce.loss;
    res.cosine = cos.loss;
    res.total = w.alpha * ce.loss + w.beta * cos.loss;
    res.dlogits = ce.dlogits;
    scale_inplace(res.dlogits, w.alpha);
    res.drep = cos.drep;
    scale_inplace(res.drep, w.beta);
    res.has_drep = true;
    return res;
}

enum class RegKind { none, l1, l2 };

struct RegResult {
    double loss = 0.0;
    std::vector<DenseMatrix> dW;
};

// Additive weight penalty over unmasked weights: coef * sum |w| or
// coef * sum w^2. Masked positions contribute nothing.
inline RegResult weight_reg(const NetworkState& net, RegKind kind, double coef) {
    if (coef < 0.0) throw ValueError("weight_reg: coefficient must be >= 0");
    RegResult res;
    res.dW.reserve(net.layers.size());
    for (const auto& layer : net.layers) {
        DenseMatrix g(layer.W.rows(), layer.W.cols());
        if (kind != RegKind::none && coef > 0.0) {
            for (std::size_t i = 0; i < layer.W.size(); ++i) {
                if (layer.M.values()[i] == 0.0) continue;
                const double w = layer.W.values()[i];
                if (kind == RegKind::l1) {
                    res.loss += coef * std::abs(w);
                    g.values()[i] = coef * (w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0));
                } else {
                    res.loss += coef * w * w;
                    g.values()[i] = 2.0 * coef * w;
                }
            }
        }
        res.dW.push_back(std::move(g));
    }
    return res;
}

}  // namespace sdplab
