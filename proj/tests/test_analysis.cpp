#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "sdplab/analysis.hpp"
#include "sdplab/pruning.hpp"

using namespace sdplab;

namespace {

ClassGroupedEmbeddings normal_groups(std::uint64_t seed, std::size_t classes, std::size_t n,
                                     std::size_t dim, double mean_spread) {
    RngState rng(seed);
    ClassGroupedEmbeddings groups;
    for (std::size_t c = 0; c < classes; ++c) {
        DenseMatrix m = seeded_normal(rng, n, dim);
        if (mean_spread != 0.0)
            for (std::size_t i = 0; i < n; ++i)
                m(i, c % dim) += mean_spread;
        groups.per_class.push_back(std::move(m));
    }
    return groups;
}

double snr_bruteforce(const ClassGroupedEmbeddings& g, bool sqrt_transform) {
    auto dist = [&](const DenseMatrix& a, std::size_t ra, const DenseMatrix& b,
                    std::size_t rb) {
        double acc = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j) {
            double x = a(ra, j), y = b(rb, j);
            if (sqrt_transform) {
                x = x >= 0.0 ? std::sqrt(x) : -std::sqrt(-x);
                y = y >= 0.0 ? std::sqrt(y) : -std::sqrt(-y);
            }
            acc += (x - y) * (x - y);
        }
        return std::sqrt(acc);
    };
    const std::size_t C = g.per_class.size();
    const std::size_t N = g.per_class.front().rows();
    double inter = 0.0, intra = 0.0;
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < C; ++i)
                if (i != c) inter += dist(g.per_class[c], n, g.per_class[i], n);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t n = 0; n < N; ++n)
            for (std::size_t j = 0; j < N; ++j)
                if (j != n) intra += dist(g.per_class[c], n, g.per_class[c], j);
    const double cd = static_cast<double>(C - 1), nd = static_cast<double>(N - 1);
    inter /= static_cast<double>(N) * cd * cd;
    intra /= static_cast<double>(C) * nd * nd;
    return inter / (intra + 1e-12);
}

}  // namespace

TEST_CASE("identical-within-class embeddings hit the stabilized denominator") {
    ClassGroupedEmbeddings g;
    g.per_class.push_back(DenseMatrix{{0.0}, {0.0}});
    g.per_class.push_back(DenseMatrix{{4.0}, {4.0}});
    const double value = snr(g);
    CHECK(value > 1e6);
    // Hand computation: inter = 4 after the sqrt transform, intra = 0.
    CHECK(value == Catch::Approx(4.0 / 1e-12).epsilon(1e-12));
    CHECK(value == Catch::Approx(snr_bruteforce(g, true)).epsilon(1e-12));
}

TEST_CASE("separability ratio matches a brute-force oracle on random groups") {
    for (std::uint64_t seed : {1, 2, 3}) {
        auto g = normal_groups(seed, 3, 5, 4, 2.0);
        CHECK(snr(g) == Catch::Approx(snr_bruteforce(g, true)).epsilon(1e-12));
        CHECK(snr(g, false) == Catch::Approx(snr_bruteforce(g, false)).epsilon(1e-12));
    }
}

TEST_CASE("separated clusters score higher than same-distribution classes") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto same = normal_groups(seed, 3, 40, 8, 0.0);
        auto apart = normal_groups(seed, 3, 40, 8, 6.0);
        const double snr_same = snr(same);
        CHECK(snr(apart) > snr_same);
        CHECK(snr_same > 0.5);
        CHECK(snr_same < 2.0);
    }
}

TEST_CASE("separability input validation") {
    ClassGroupedEmbeddings unequal;
    unequal.per_class.push_back(DenseMatrix{{0.0}, {1.0}});
    unequal.per_class.push_back(DenseMatrix{{2.0}});
    REQUIRE_THROWS_WITH(snr(unequal), Catch::Matchers::ContainsSubstring("subsample"));

    ClassGroupedEmbeddings single_class;
    single_class.per_class.push_back(DenseMatrix{{0.0}, {1.0}});
    REQUIRE_THROWS_AS(snr(single_class), ValueError);

    ClassGroupedEmbeddings one_sample;
    one_sample.per_class.push_back(DenseMatrix{{0.0}});
    one_sample.per_class.push_back(DenseMatrix{{1.0}});
    REQUIRE_THROWS_AS(snr(one_sample), ValueError);
}

TEST_CASE("plain-distance mode is rotation invariant") {
    auto g = normal_groups(7, 3, 6, 5, 2.0);
    const double base = snr(g, false);

    // Seeded orthogonal matrix via Gram-Schmidt.
    RngState rng(8);
    DenseMatrix q = seeded_normal(rng, 5, 5);
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t k = 0; k < i; ++k) {
            double dot = 0.0;
            for (std::size_t j = 0; j < 5; ++j) dot += q(i, j) * q(k, j);
            for (std::size_t j = 0; j < 5; ++j) q(i, j) -= dot * q(k, j);
        }
        double norm = 0.0;
        for (std::size_t j = 0; j < 5; ++j) norm += q(i, j) * q(i, j);
        norm = std::sqrt(norm);
        for (std::size_t j = 0; j < 5; ++j) q(i, j) /= norm;
    }
    ClassGroupedEmbeddings rotated;
    for (const auto& m : g.per_class) rotated.per_class.push_back(matmul(m, q));
    CHECK(snr(rotated, false) == Catch::Approx(base).epsilon(1e-9));
}

TEST_CASE("sample grouping splits rows by label") {
    DenseMatrix z{{1.0, 2.0}, {3.0, 4.0}, {5.0, 6.0}, {7.0, 8.0}};
    auto groups = group_by_class(z, {1, 0, 1, 0}, 2);
    REQUIRE(groups.per_class.size() == 2);
    CHECK(groups.per_class[0](0, 0) == 3.0);
    CHECK(groups.per_class[0](1, 0) == 7.0);
    CHECK(groups.per_class[1](0, 1) == 2.0);
    REQUIRE_THROWS_AS(group_by_class(z, {0, 1}, 2), ValueError);
    REQUIRE_THROWS_AS(group_by_class(z, {0, 1, 2, 0}, 2), ValueError);
}

TEST_CASE("digamma matches reference values and the recurrence") {
    const double gamma = 0.57721566490153286;
    CHECK(digamma(1.0) == Catch::Approx(-gamma).margin(1e-10));
    CHECK(digamma(0.5) == Catch::Approx(-gamma - 2.0 * std::log(2.0)).margin(1e-10));
    CHECK(digamma(5.0) ==
          Catch::Approx(1.0 + 0.5 + 1.0 / 3.0 + 0.25 - gamma).margin(1e-10));
    CHECK(digamma(10.0) == Catch::Approx(2.8289682539682537 - gamma).margin(1e-10));
    for (double x : {0.3, 1.7, 4.2, 9.9})
        CHECK(digamma(x + 1.0) == Catch::Approx(digamma(x) + 1.0 / x).margin(1e-10));
    REQUIRE_THROWS_AS(digamma(0.0), ValueError);
}

TEST_CASE("neighbor estimate is large for identical continuous variables") {
    RngState rng(9);
    DenseMatrix z = seeded_normal(rng, 1000, 1);
    auto result = mi_knn(z, z);
    CHECK(result.nats > 2.0);
    CHECK_FALSE(result.jittered);
    // With identical blocks the counts collapse to psi(n) - psi(k).
    CHECK(result.nats ==
          Catch::Approx(digamma(1000.0) - digamma(5.0)).margin(1e-9));
}

TEST_CASE("neighbor estimate vanishes for independent variables") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        RngState rng(seed + 30);
        DenseMatrix a = seeded_normal(rng, 2000, 1);
        DenseMatrix b = seeded_normal(rng, 2000, 1);
        CHECK(mi_knn(a, b).nats < 0.05);
    }
}

TEST_CASE("neighbor estimate recovers the Gaussian closed form") {
    const double rho = 0.9;
    const double truth = -0.5 * std::log(1.0 - rho * rho);
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        RngState rng(seed + 40);
        DenseMatrix a(2000, 1), b(2000, 1);
        for (std::size_t i = 0; i < 2000; ++i) {
            const double x = rng.next_normal();
            a(i, 0) = x;
            b(i, 0) = rho * x + std::sqrt(1.0 - rho * rho) * rng.next_normal();
        }
        CHECK(mi_knn(a, b).nats == Catch::Approx(truth).margin(0.1));
    }
}

TEST_CASE("duplicate rows trigger the deterministic jitter") {
    RngState rng(10);
    DenseMatrix base = seeded_normal(rng, 200, 2);
    DenseMatrix dup(400, 2);
    for (std::size_t i = 0; i < 400; ++i)
        for (std::size_t j = 0; j < 2; ++j) dup(i, j) = base(i / 2, j);
    auto result = mi_knn(dup, dup);
    CHECK(result.jittered);
    CHECK(std::isfinite(result.nats));
    CHECK(result.nats >= 0.0);

    auto again = mi_knn(dup, dup);
    CHECK(result.nats == again.nats);
}

TEST_CASE("neighbor estimate rejects tiny inputs") {
    DenseMatrix z{{0.0}, {1.0}, {2.0}, {3.0}, {4.0}, {5.0}};
    REQUIRE_THROWS_AS(mi_knn(z, z), ValueError);  // needs k+2 = 7 rows
    DenseMatrix other{{0.0}, {1.0}};
    REQUIRE_THROWS_AS(mi_knn(z, other), DimensionError);
}

TEST_CASE("unsmoothed identity estimate equals the histogram entropy") {
    RngState rng(11);
    std::vector<double> a(5000);
    for (double& v : a) v = rng.next_normal();
    MiEstimatorConfig cfg;
    cfg.smoothing = 0.0;
    const double mi = mi_binned(a, a, cfg).nats;

    const auto [lo_it, hi_it] = std::minmax_element(a.begin(), a.end());
    const double lo = *lo_it, range = *hi_it - lo;
    std::vector<double> hist(cfg.bins, 0.0);
    for (double v : a) {
        auto idx = static_cast<std::size_t>((v - lo) / range * static_cast<double>(cfg.bins));
        hist[std::min(idx, cfg.bins - 1)] += 1.0;
    }
    double h = 0.0;
    for (double c : hist)
        if (c > 0.0) {
            const double p = c / 5000.0;
            h -= p * std::log(p);
        }
    CHECK(mi == Catch::Approx(h).margin(1e-12));
}

TEST_CASE("smoothed identity estimate stays below the marginal entropy") {
    RngState rng(12);
    std::vector<double> a(5000);
    for (double& v : a) v = rng.next_normal();
    const double mi = mi_binned(a, a).nats;
    CHECK(mi > 1.5);

    // Upper bound: MI cannot exceed either smoothed marginal's entropy.
    MiEstimatorConfig cfg;
    std::vector<double> counts(cfg.bins, 0.0);
    const auto [lo_it, hi_it] = std::minmax_element(a.begin(), a.end());
    const double lo = *lo_it, range = *hi_it - lo;
    for (double v : a) {
        auto idx = static_cast<std::size_t>((v - lo) / range * static_cast<double>(cfg.bins));
        counts[std::min(idx, cfg.bins - 1)] += 1.0;
    }
    DenseMatrix row(1, cfg.bins);
    for (std::size_t i = 0; i < cfg.bins; ++i) row(0, i) = counts[i];
    // 1-D smoothing via the same kernel the estimator uses on each axis.
    detail::smooth_axis(row, cfg.smoothing, true);
    double total = 0.0;
    for (double v : row.values()) total += v;
    double h = 0.0;
    for (double v : row.values())
        if (v > 0.0) h -= (v / total) * std::log(v / total);
    CHECK(mi < h);
}

TEST_CASE("independent uniform series carry almost no binned information") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        RngState rng(seed + 50);
        std::vector<double> a(10000), b(10000);
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = rng.next_unit();
            b[i] = rng.next_unit();
        }
        CHECK(mi_binned(a, b).nats < 0.05);
    }
}

TEST_CASE("binned estimate recovers the Gaussian closed form") {
    const double rho = 0.9;
    const double truth = -0.5 * std::log(1.0 - rho * rho);
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        RngState rng(seed + 60);
        std::vector<double> a(2000), b(2000);
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double x = rng.next_normal();
            a[i] = x;
            b[i] = rho * x + std::sqrt(1.0 - rho * rho) * rng.next_normal();
        }
        CHECK(mi_binned(a, b).nats == Catch::Approx(truth).margin(0.15));
        CHECK(std::abs(mi_binned(a, b).nats - mi_binned(b, a).nats) < 1e-9);
    }
}

TEST_CASE("degenerate binned inputs are reported") {
    std::vector<double> constant(100, 3.0), varying(100);
    for (std::size_t i = 0; i < 100; ++i) varying[i] = static_cast<double>(i);
    auto res = mi_binned(constant, varying);
    CHECK(res.nats == 0.0);
    CHECK(res.constant_series);

    std::vector<double> shorty(5, 1.0);
    REQUIRE_THROWS_AS(mi_binned(shorty, shorty), ValueError);
    std::vector<double> longer(20, 1.0);
    REQUIRE_THROWS_AS(mi_binned(longer, shorty), DimensionError);
}

TEST_CASE("per-dimension average adapter matches scalar calls") {
    RngState rng(13);
    DenseMatrix zs = seeded_normal(rng, 500, 3);
    DenseMatrix zt = seeded_normal(rng, 500, 3);
    double expect = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
        std::vector<double> a(500), b(500);
        for (std::size_t i = 0; i < 500; ++i) {
            a[i] = zs(i, j);
            b[i] = zt(i, j);
        }
        expect += mi_binned(a, b).nats;
    }
    CHECK(mi_binned_avg(zs, zt) == Catch::Approx(expect / 3.0).margin(1e-12));
}

TEST_CASE("identical representations carry zero input-bound information") {
    DenseMatrix h(6, 3, 1.5);
    CHECK(kde_mi_input_bound(h, 0.5) == 0.0);
}

TEST_CASE("two far clusters saturate at one bit") {
    DenseMatrix h(2, 2);
    h(1, 0) = 100.0;
    h(1, 1) = 100.0;
    CHECK(kde_mi_input_bound(h, 0.1) == Catch::Approx(std::log(2.0)).margin(1e-12));
}

TEST_CASE("input bound is monotone nonincreasing in the noise variance") {
    RngState rng(14);
    DenseMatrix h = seeded_normal(rng, 50, 6);
    double prev = std::numeric_limits<double>::infinity();
    for (double variance : {0.01, 0.1, 1.0, 10.0}) {
        const double bound = kde_mi_input_bound(h, variance);
        CHECK(bound <= prev + 1e-12);
        CHECK(bound >= 0.0);
        prev = bound;
    }
    REQUIRE_THROWS_AS(kde_mi_input_bound(h, 0.0), ValueError);
    REQUIRE_THROWS_AS(kde_mi_input_bound(DenseMatrix(1, 3), 1.0), ValueError);
}

TEST_CASE("label bound vanishes for a single class and hits one bit for two") {
    RngState rng(15);
    DenseMatrix h = seeded_normal(rng, 30, 4);
    std::vector<std::size_t> same(30, 0);
    CHECK(kde_mi_label_bound(h, same, 1.0).nats == 0.0);

    DenseMatrix clusters(20, 2);
    std::vector<std::size_t> labels(20);
    for (std::size_t i = 10; i < 20; ++i) {
        clusters(i, 0) = 100.0;
        clusters(i, 1) = 100.0;
        labels[i] = 1;
    }
    CHECK(kde_mi_label_bound(clusters, labels, 1.0).nats ==
          Catch::Approx(std::log(2.0)).margin(1e-12));
}

TEST_CASE("label bound never exceeds the input bound") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        RngState rng(seed + 70);
        DenseMatrix h = seeded_normal(rng, 40, 5);
        std::vector<std::size_t> labels;
        for (std::size_t i = 0; i < 40; ++i)
            labels.push_back(static_cast<std::size_t>(rng.next_below(3)));
        const double input = kde_mi_input_bound(h, 0.5);
        const auto label = kde_mi_label_bound(h, labels, 0.5);
        CHECK(label.nats <= input + 1e-12);
    }
}

TEST_CASE("a one-sample class is noted and contributes nothing") {
    RngState rng(16);
    DenseMatrix h = seeded_normal(rng, 9, 3);
    std::vector<std::size_t> labels{0, 0, 0, 0, 1, 1, 1, 1, 2};
    const auto res = kde_mi_label_bound(h, labels, 1.0);
    REQUIRE(res.singleton_classes == std::vector<std::size_t>{2});
    CHECK(res.nats <= kde_mi_input_bound(h, 1.0) + 1e-12);
}

TEST_CASE("mask agreement is one for identical and zero for disjoint sets") {
    DenseMatrix a(2, 3, 1.0), b(2, 3, 1.0);
    a(0, 0) = 0.0;
    a(0, 1) = 0.0;
    auto self = mask_overlap({a}, {a});
    CHECK(self.overall == 1.0);
    CHECK(self.per_layer[0] == 1.0);

    b(1, 0) = 0.0;
    b(1, 1) = 0.0;
    auto disjoint = mask_overlap({a}, {b});
    CHECK(disjoint.overall == 0.0);

    DenseMatrix full(2, 3, 1.0);
    auto untouched = mask_overlap({full}, {full});
    CHECK(untouched.per_layer[0] == 1.0);
    CHECK(untouched.overall == 1.0);

    REQUIRE_THROWS_AS(mask_overlap({a}, {a, b}), DimensionError);
    REQUIRE_THROWS_AS(mask_overlap({a}, {DenseMatrix(3, 2, 1.0)}), DimensionError);
}

TEST_CASE("independent random masks agree at the hypergeometric rate") {
    const std::size_t n = 10000, pruned = 5000;
    auto random_mask = [&](std::uint64_t seed) {
        RngState rng(seed);
        DenseMatrix m(100, 100, 1.0);
        const auto order = shuffled_indices(rng, n);
        for (std::size_t i = 0; i < pruned; ++i) m.values()[order[i]] = 0.0;
        return m;
    };
    const DenseMatrix a = random_mask(17), b = random_mask(18);
    const double jaccard = mask_overlap({a}, {b}).overall;

    // Intersection is hypergeometric; propagate its 3-sigma band through
    // J = X / (2*pruned - X).
    const double expect_x = 2500.0;
    const double sigma_x = std::sqrt(5000.0 * 0.5 * 0.5 * (5000.0 / 9999.0));
    const double slope = 2.0 * 5000.0 / (7500.0 * 7500.0);
    CHECK(std::abs(jaccard - expect_x / 7500.0) < 3.0 * sigma_x * slope);
}

TEST_CASE("reference masks prune the matched count of smallest weights") {
    RngState rng(19);
    NetworkState net = make_mlp(rng, {4, 10, 3});
    auto update = build_mask_layerwise(net, score_magnitude(net), 0.3);
    apply_mask_update(net, update);

    // Same seed rebuilds the dense weights the masks were derived from.
    RngState rng2(19);
    NetworkState dense = make_mlp(rng2, {4, 10, 3});
    auto ref_masks = mbp_reference_masks(dense, masks_of(net));
    auto overlap = mask_overlap(masks_of(net), ref_masks);
    CHECK(overlap.overall == 1.0);
    for (double v : overlap.per_layer) CHECK(v == 1.0);
    for (double v : ref_masks.back().values()) CHECK(v == 1.0);
}

TEST_CASE("representation distance is the Frobenius gap") {
    RngState rng(20);
    DenseMatrix z = seeded_normal(rng, 8, 5);
    CHECK(representation_distance(z, z) == 0.0);

    DenseMatrix doubled = z;
    scale_inplace(doubled, 2.0);
    CHECK(representation_distance(z, doubled) ==
          Catch::Approx(frobenius_norm(z)).margin(1e-12));

    DenseMatrix other = seeded_normal(rng, 8, 5);
    double acc = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double d = z.values()[i] - other.values()[i];
        acc += d * d;
    }
    CHECK(representation_distance(z, other) == Catch::Approx(std::sqrt(acc)).margin(1e-12));
    REQUIRE_THROWS_AS(representation_distance(z, DenseMatrix(5, 8)), DimensionError);
}
