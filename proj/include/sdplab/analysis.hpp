#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sdplab/matrix.hpp"
#include "sdplab/network.hpp"
#include "sdplab/rng.hpp"

namespace sdplab {

struct ClassGroupedEmbeddings {
    std::vector<DenseMatrix> per_class;

    void validate() const {
        if (per_class.empty()) throw ValueError("embeddings: no classes");
        const std::size_t width = per_class.front().cols();
        for (std::size_t c = 0; c < per_class.size(); ++c) {
            if (per_class[c].rows() == 0)
                throw ValueError("embeddings: class " + std::to_string(c) + " is empty");
            if (per_class[c].cols() != width)
                throw ValueError("embeddings: class " + std::to_string(c) +
                                 " has width " + std::to_string(per_class[c].cols()) +
                                 ", expected " + std::to_string(width));
        }
    }
};

inline ClassGroupedEmbeddings group_by_class(const DenseMatrix& Z,
                                             const std::vector<std::size_t>& labels,
                                             std::size_t num_classes) {
    if (labels.size() != Z.rows())
        throw ValueError("group_by_class: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(Z.rows()) + " rows");
    std::vector<std::vector<std::size_t>> rows(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= num_classes) throw ValueError("group_by_class: label out of range");
        rows[labels[i]].push_back(i);
    }
    ClassGroupedEmbeddings groups;
    for (const auto& idx : rows) {
        DenseMatrix m(idx.size(), Z.cols());
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t j = 0; j < Z.cols(); ++j) m(i, j) = Z(idx[i], j);
        groups.per_class.push_back(std::move(m));
    }
    groups.validate();
    return groups;
}

namespace detail {

// Elementwise signed square root keeps the compressive transform real-valued
// on negative entries.
inline double signed_sqrt(double v) {
    return v >= 0.0 ? std::sqrt(v) : -std::sqrt(-v);
}

inline double row_distance(const DenseMatrix& a, std::size_t ra, const DenseMatrix& b,
                           std::size_t rb, bool sqrt_transform) {
    double acc = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) {
        double x = a(ra, j), y = b(rb, j);
        if (sqrt_transform) {
            x = signed_sqrt(x);
            y = signed_sqrt(y);
        }
        acc += (x - y) * (x - y);
    }
    return std::sqrt(acc);
}

}  // namespace detail

// Ratio of the average index-paired inter-class distance to the average
// intra-class distance, normalized by 1/(N(C-1)^2) and 1/(C(N-1)^2). The
// square root applied to representation entries is the elementwise signed
// variant; signed_sqrt=false evaluates plain distances instead.
inline double snr(const ClassGroupedEmbeddings& groups, bool signed_sqrt = true) {
    groups.validate();
    const std::size_t C = groups.per_class.size();
    if (C < 2) throw ValueError("snr: need at least 2 classes");
    const std::size_t N = groups.per_class.front().rows();
    for (const auto& m : groups.per_class)
        if (m.rows() != N)
            throw ValueError("snr: classes need equal sample counts; subsample first");
    if (N < 2) throw ValueError("snr: need at least 2 samples per class");

    double inter = 0.0;
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < C; ++i) {
                if (i == c) continue;
                inter += detail::row_distance(groups.per_class[c], n, groups.per_class[i],
                                              n, signed_sqrt);
            }
    const double cd = static_cast<double>(C) - 1.0;
    inter /= static_cast<double>(N) * cd * cd;

    double intra = 0.0;
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t j = 0; j < N; ++j) {
                if (j == n) continue;
                intra += detail::row_distance(groups.per_class[c], n, groups.per_class[c],
                                              j, signed_sqrt);
            }
    const double nd = static_cast<double>(N) - 1.0;
    intra /= static_cast<double>(C) * nd * nd;

    return inter / (intra + 1e-12);
}

struct MiEstimatorConfig {
    std::size_t k = 5;
    std::size_t bins = 256;
    double smoothing = 3.0;  // Gaussian kernel width in bins; 0 disables

    void validate() const {
        if (k < 1) throw ConfigError("mi: k must be >= 1");
        if (bins < 2) throw ConfigError("mi: bins must be >= 2");
        if (smoothing < 0.0) throw ConfigError("mi: smoothing must be >= 0");
    }
};

inline double digamma(double x) {
    if (!(x > 0.0)) throw ValueError("digamma: argument must be positive");
    double result = 0.0;
    while (x < 6.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    const double inv = 1.0 / x, inv2 = inv * inv;
    result += std::log(x) - 0.5 * inv -
              inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 / 252.0));
    return result;
}

struct MiKnnResult {
    double nats = 0.0;
    bool jittered = false;
};

// Kraskov neighbor-counting estimate over the joint (Z_s, Z_t) space with
// max-norm balls: psi(k) + psi(n) - mean(psi(n_x+1) + psi(n_y+1)), clipped at
// zero. Duplicate joint rows get a deterministic 1e-10 jitter first.
inline MiKnnResult mi_knn(const DenseMatrix& zs, const DenseMatrix& zt,
                          const MiEstimatorConfig& cfg = {}) {
    cfg.validate();
    if (zs.rows() != zt.rows())
        throw DimensionError("mi_knn: row counts differ: " + std::to_string(zs.rows()) +
                             " vs " + std::to_string(zt.rows()));
    const std::size_t n = zs.rows();
    if (n < cfg.k + 2) throw ValueError("mi_knn: need at least k+2 rows");

    MiKnnResult result;
    DenseMatrix xs = zs, xt = zt;
    {
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        auto row_less = [&](std::size_t a, std::size_t b) {
            for (std::size_t j = 0; j < xs.cols(); ++j)
                if (xs(a, j) != xs(b, j)) return xs(a, j) < xs(b, j);
            for (std::size_t j = 0; j < xt.cols(); ++j)
                if (xt(a, j) != xt(b, j)) return xt(a, j) < xt(b, j);
            return false;
        };
        std::sort(order.begin(), order.end(), row_less);
        bool duplicate = false;
        for (std::size_t i = 1; i < n && !duplicate; ++i)
            duplicate = !row_less(order[i - 1], order[i]);
        if (duplicate) {
            result.jittered = true;
            RngState jitter_rng(0x6d695f6a69747472ULL);
            for (double& v : xs.values()) v += 1e-10 * (jitter_rng.next_unit() - 0.5);
            for (double& v : xt.values()) v += 1e-10 * (jitter_rng.next_unit() - 0.5);
        }
    }

    auto block_dist = [](const DenseMatrix& m, std::size_t a, std::size_t b) {
        double d = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j)
            d = std::max(d, std::abs(m(a, j) - m(b, j)));
        return d;
    };

    double psi_sum = 0.0;
    std::vector<double> dx(n), dy(n), joint(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            dx[j] = block_dist(xs, i, j);
            dy[j] = block_dist(xt, i, j);
            joint[j] = std::max(dx[j], dy[j]);
        }
        std::vector<double> order = joint;
        order[i] = std::numeric_limits<double>::infinity();  // exclude self
        std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cfg.k - 1),
                         order.end());
        const double eps = order[cfg.k - 1];

        std::size_t nx = 0, ny = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            if (dx[j] < eps) ++nx;
            if (dy[j] < eps) ++ny;
        }
        psi_sum += digamma(static_cast<double>(nx) + 1.0) +
                   digamma(static_cast<double>(ny) + 1.0);
    }

    result.nats = digamma(static_cast<double>(cfg.k)) + digamma(static_cast<double>(n)) -
                  psi_sum / static_cast<double>(n);
    result.nats = std::max(0.0, result.nats);
    return result;
}

struct MiBinnedResult {
    double nats = 0.0;
    bool constant_series = false;
};

namespace detail {

inline void smooth_axis(DenseMatrix& h, double sigma, bool along_rows) {
    const auto radius = static_cast<std::ptrdiff_t>(std::ceil(4.0 * sigma));
    std::vector<double> kernel;
    double ksum = 0.0;
    for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
        kernel.push_back(std::exp(-static_cast<double>(t * t) / (2.0 * sigma * sigma)));
        ksum += kernel.back();
    }
    for (double& k : kernel) k /= ksum;

    DenseMatrix out(h.rows(), h.cols());
    const auto rows = static_cast<std::ptrdiff_t>(h.rows());
    const auto cols = static_cast<std::ptrdiff_t>(h.cols());
    for (std::ptrdiff_t i = 0; i < rows; ++i)
        for (std::ptrdiff_t j = 0; j < cols; ++j) {
            double acc = 0.0;
            for (std::ptrdiff_t t = -radius; t <= radius; ++t) {
                const std::ptrdiff_t si = along_rows ? i : i - t;
                const std::ptrdiff_t sj = along_rows ? j - t : j;
                if (si < 0 || si >= rows || sj < 0 || sj >= cols) continue;
                acc += kernel[static_cast<std::size_t>(t + radius)] *
                       h(static_cast<std::size_t>(si), static_cast<std::size_t>(sj));
            }
            out(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = acc;
        }
    h = std::move(out);
}

}  // namespace detail

// Equal-width 2-D histogram over the observed ranges, optional separable
// Gaussian smoothing, then plug-in MI of the smoothed joint against the
// product of its marginals. Constant input collapses to zero.
inline MiBinnedResult mi_binned(const std::vector<double>& a, const std::vector<double>& b,
                                const MiEstimatorConfig& cfg = {}) {
    cfg.validate();
    if (a.size() != b.size())
        throw DimensionError("mi_binned: series lengths differ: " +
                             std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    if (a.size() < 10) throw ValueError("mi_binned: need at least 10 samples");

    const auto [amin_it, amax_it] = std::minmax_element(a.begin(), a.end());
    const auto [bmin_it, bmax_it] = std::minmax_element(b.begin(), b.end());
    const double amin = *amin_it, arange = *amax_it - amin;
    const double bmin = *bmin_it, brange = *bmax_it - bmin;
    if (arange == 0.0 || brange == 0.0) return {0.0, true};

    const std::size_t B = cfg.bins;
    auto bin_of = [B](double v, double lo, double range) {
        auto idx = static_cast<std::size_t>((v - lo) / range * static_cast<double>(B));
        return std::min(idx, B - 1);
    };
    DenseMatrix joint(B, B);
    for (std::size_t i = 0; i < a.size(); ++i)
        joint(bin_of(a[i], amin, arange), bin_of(b[i], bmin, brange)) += 1.0;

    if (cfg.smoothing > 0.0) {
        detail::smooth_axis(joint, cfg.smoothing, true);
        detail::smooth_axis(joint, cfg.smoothing, false);
    }
    double total = 0.0;
    for (double v : joint.values()) total += v;
    for (double& v : joint.values()) v /= total;

    std::vector<double> pa(B, 0.0), pb(B, 0.0);
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < B; ++j) {
            pa[i] += joint(i, j);
            pb[j] += joint(i, j);
        }

    double mi = 0.0;
    for (std::size_t i = 0; i < B; ++i)
        for (std::size_t j = 0; j < B; ++j) {
            const double p = joint(i, j);
            if (p <= 0.0) continue;
            mi += p * std::log(p / (pa[i] * pb[j]));
        }
    return {std::max(0.0, mi), false};
}

// Representation adapter: the mean of mi_binned over matched dimensions.
inline double mi_binned_avg(const DenseMatrix& zs, const DenseMatrix& zt,
                            const MiEstimatorConfig& cfg = {}) {
    if (!zs.same_shape(zt))
        throw DimensionError("mi_binned_avg: shapes differ: " + zs.shape_str() + " vs " +
                             zt.shape_str());
    double sum = 0.0;
    std::vector<double> a(zs.rows()), b(zs.rows());
    for (std::size_t j = 0; j < zs.cols(); ++j) {
        for (std::size_t i = 0; i < zs.rows(); ++i) {
            a[i] = zs(i, j);
            b[i] = zt(i, j);
        }
        sum += mi_binned(a, b, cfg).nats;
    }
    return sum / static_cast<double>(zs.cols());
}

struct KdeMiConfig {
    double noise_variance = 1.0;
    std::vector<std::size_t> labels;  // used by the label bound

    void validate() const {
        if (!(noise_variance > 0.0)) throw ConfigError("kde: noise variance must be > 0");
    }
};

namespace detail {

inline double kde_entropy_term(const DenseMatrix& h, const std::vector<std::size_t>& rows,
                               double noise_variance) {
    const std::size_t p = rows.size();
    double outer = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
        double inner = 0.0;
        for (std::size_t j = 0; j < p; ++j) {
            double d2 = 0.0;
            for (std::size_t c = 0; c < h.cols(); ++c) {
                const double diff = h(rows[i], c) - h(rows[j], c);
                d2 += diff * diff;
            }
            inner += std::exp(-d2 / (2.0 * noise_variance));
        }
        outer += std::log(inner / static_cast<double>(p));
    }
    return -outer / static_cast<double>(p);
}

}  // namespace detail

// Gaussian-mixture bound on the information the representation carries about
// which input produced it: -(1/P) sum_i log[(1/P) sum_j exp(-|h_i-h_j|^2 / 2s)].
inline double kde_mi_input_bound(const DenseMatrix& h, double noise_variance) {
    if (!(noise_variance > 0.0)) throw ValueError("kde: noise variance must be > 0");
    if (h.rows() < 2) throw ValueError("kde: need at least 2 rows");
    std::vector<std::size_t> all(h.rows());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return detail::kde_entropy_term(h, all, noise_variance);
}

struct KdeLabelResult {
    double nats = 0.0;
    std::vector<std::size_t> singleton_classes;
};

// Label-information bound: the input bound minus the class-frequency-weighted
// within-class terms. A one-sample class contributes exactly zero.
inline KdeLabelResult kde_mi_label_bound(const DenseMatrix& h,
                                         const std::vector<std::size_t>& labels,
                                         double noise_variance) {
    if (labels.size() != h.rows())
        throw ValueError("kde: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(h.rows()) + " rows");
    KdeLabelResult result;
    result.nats = kde_mi_input_bound(h, noise_variance);

    std::size_t num_classes = 0;
    for (std::size_t l : labels) num_classes = std::max(num_classes, l + 1);
    std::vector<std::vector<std::size_t>> rows(num_classes);
    for (std::size_t i = 0; i < labels.size(); ++i) rows[labels[i]].push_back(i);

    const double p_total = static_cast<double>(h.rows());
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (rows[c].empty()) continue;
        if (rows[c].size() == 1) {
            result.singleton_classes.push_back(c);
            continue;  // degenerate inner term is exactly zero
        }
        const double p_c = static_cast<double>(rows[c].size()) / p_total;
        result.nats -= p_c * detail::kde_entropy_term(h, rows[c], noise_variance);
    }
    return result;
}

struct OverlapResult {
    std::vector<double> per_layer;
    double overall = 1.0;
};

// Jaccard agreement between the pruned-position sets of two mask stacks.
inline OverlapResult mask_overlap(const std::vector<DenseMatrix>& a,
                                  const std::vector<DenseMatrix>& b) {
    if (a.size() != b.size())
        throw DimensionError("mask_overlap: layer counts differ: " +
                             std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    OverlapResult result;
    std::size_t inter_all = 0, union_all = 0;
    for (std::size_t l = 0; l < a.size(); ++l) {
        if (!a[l].same_shape(b[l]))
            throw DimensionError("mask_overlap: layer " + std::to_string(l) +
                                 " shapes differ: " + a[l].shape_str() + " vs " +
                                 b[l].shape_str());
        std::size_t inter = 0, uni = 0;
        for (std::size_t i = 0; i < a[l].size(); ++i) {
            const bool pa = a[l].values()[i] == 0.0;
            const bool pb = b[l].values()[i] == 0.0;
            if (pa && pb) ++inter;
            if (pa || pb) ++uni;
        }
        result.per_layer.push_back(uni == 0 ? 1.0
                                            : static_cast<double>(inter) /
                                                  static_cast<double>(uni));
        inter_all += inter;
        union_all += uni;
    }
    result.overall = union_all == 0 ? 1.0
                                    : static_cast<double>(inter_all) /
                                          static_cast<double>(union_all);
    return result;
}

inline std::vector<DenseMatrix> masks_of(const NetworkState& net) {
    std::vector<DenseMatrix> masks;
    masks.reserve(net.layers.size());
    for (const auto& layer : net.layers) masks.push_back(layer.M);
    return masks;
}

// Reference masks for overlap reporting: prune the same per-layer count as the
// student did, choosing the smallest-magnitude reference weights.
inline std::vector<DenseMatrix> mbp_reference_masks(
    const NetworkState& reference, const std::vector<DenseMatrix>& student_masks) {
    if (student_masks.size() != reference.layers.size())
        throw DimensionError("mbp_reference_masks: layer counts differ");
    std::vector<DenseMatrix> out;
    for (std::size_t l = 0; l < reference.layers.size(); ++l) {
        const auto& layer = reference.layers[l];
        if (!student_masks[l].same_shape(layer.M))
            throw DimensionError("mbp_reference_masks: layer " + std::to_string(l) +
                                 " shape mismatch");
        DenseMatrix mask(layer.M.rows(), layer.M.cols(), 1.0);
        if (layer.prunable) {
            std::size_t pruned = 0;
            for (double v : student_masks[l].values())
                if (v == 0.0) ++pruned;
            std::vector<double> keys;
            keys.reserve(layer.W.size());
            for (double w : layer.W.values()) keys.push_back(std::abs(w));
            const auto order = argsort_by_key(keys);
            for (std::size_t i = 0; i < pruned; ++i) mask.values()[order[i]] = 0.0;
        }
        out.push_back(std::move(mask));
    }
    return out;
}

inline double representation_distance(const DenseMatrix& z_ref, const DenseMatrix& z_pruned) {
    if (!z_ref.same_shape(z_pruned))
        throw DimensionError("representation_distance: shapes differ: " + z_ref.shape_str() +
                             " vs " + z_pruned.shape_str());
    double acc = 0.0;
    for (std::size_t i = 0; i < z_ref.size(); ++i) {
        const double d = z_ref.values()[i] - z_pruned.values()[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace sdplab
