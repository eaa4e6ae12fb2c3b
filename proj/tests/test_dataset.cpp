#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <set>

#include "sdplab/dataset.hpp"

using namespace sdplab;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "sdplab_dataset_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::size_t nearest_centroid(const DenseMatrix& centroids, const DenseMatrix& x,
                             std::size_t row) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.rows(); ++c) {
        double d = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) {
            const double diff = x(row, j) - centroids(c, j);
            d += diff * diff;
        }
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

}  // namespace

TEST_CASE("blobs have exact per-class counts") {
    RngState rng(1);
    auto ds = gen_gaussian_blobs(rng, 4, 500, 8, 5.0, 1.0);
    REQUIRE(ds.size() == 2000);
    REQUIRE(ds.num_classes == 4);
    auto counts = ds.class_counts();
    for (auto c : counts) CHECK(c == 500);
    ds.validate();
}

TEST_CASE("zero cluster_std collapses each class onto its center") {
    RngState rng(2);
    auto ds = gen_gaussian_blobs(rng, 3, 50, 4, 5.0, 0.0);
    for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t base = c * 50;
        for (std::size_t i = 1; i < 50; ++i)
            for (std::size_t j = 0; j < 4; ++j)
                CHECK(ds.inputs(base + i, j) == ds.inputs(base, j));
    }
}

TEST_CASE("well-separated blobs are perfectly classified by nearest centroid") {
    RngState rng(3);
    auto ds = gen_gaussian_blobs(rng, 4, 200, 6, 10.0, 0.05);

    DenseMatrix centroids(4, 6);
    std::vector<double> counts(4, 0.0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        counts[ds.labels[i]] += 1.0;
        for (std::size_t j = 0; j < 6; ++j) centroids(ds.labels[i], j) += ds.inputs(i, j);
    }
    for (std::size_t c = 0; c < 4; ++c)
        for (std::size_t j = 0; j < 6; ++j) centroids(c, j) /= counts[c];

    for (std::size_t i = 0; i < ds.size(); ++i)
        REQUIRE(nearest_centroid(centroids, ds.inputs, i) == ds.labels[i]);
}

TEST_CASE("blob generation rejects bad parameters") {
    RngState rng(4);
    REQUIRE_THROWS_AS(gen_gaussian_blobs(rng, 1, 10, 2, 1.0, 1.0), ValueError);
    REQUIRE_THROWS_AS(gen_gaussian_blobs(rng, 2, 10, 0, 1.0, 1.0), ValueError);
    REQUIRE_THROWS_AS(gen_gaussian_blobs(rng, 2, 0, 2, 1.0, 1.0), ValueError);
    REQUIRE_THROWS_AS(gen_gaussian_blobs(rng, 2, 10, 2, 1.0, -0.1), ValueError);
}

TEST_CASE("noise-free spirals lie exactly on the parametric curves") {
    RngState rng(5);
    const std::size_t n = 100;
    auto ds = gen_two_spirals(rng, n, 0.0);
    REQUIRE(ds.size() == 2 * n);
    auto counts = ds.class_counts();
    CHECK(counts[0] == n);
    CHECK(counts[1] == n);

    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(n - 1);
        const double r = 0.5 + 2.0 * t;
        const double a = 3.0 * std::numbers::pi * t;
        CHECK(ds.inputs(i, 0) == Catch::Approx(r * std::cos(a)).margin(1e-12));
        CHECK(ds.inputs(i, 1) == Catch::Approx(r * std::sin(a)).margin(1e-12));
        CHECK(ds.inputs(n + i, 0) == Catch::Approx(-ds.inputs(i, 0)).margin(1e-12));
        CHECK(ds.inputs(n + i, 1) == Catch::Approx(-ds.inputs(i, 1)).margin(1e-12));
    }
}

TEST_CASE("noise-free spirals are separable by 1-NN on held-out points") {
    RngState rng(6);
    auto ds = gen_two_spirals(rng, 500, 0.0);

    std::size_t correct = 0, held_out = 0;
    for (std::size_t i = 0; i < ds.size(); i += 5) {
        ++held_out;
        std::size_t best = i;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < ds.size(); ++j) {
            if (j % 5 == 0) continue;
            const double dx = ds.inputs(i, 0) - ds.inputs(j, 0);
            const double dy = ds.inputs(i, 1) - ds.inputs(j, 1);
            const double d = dx * dx + dy * dy;
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        if (ds.labels[best] == ds.labels[i]) ++correct;
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(held_out) >= 0.99);
}

TEST_CASE("csv loader recovers a handwritten file exactly") {
    auto path = temp_file("tiny.csv");
    {
        std::ofstream out(path);
        out << "f0,f1,label\n";
        out << "1.5,-2.25,a\n";
        out << "0.125,3,b\n";
        out << "-7,0.5,a\n";
    }
    auto ds = load_csv(path.string(), "label");
    REQUIRE(ds.size() == 3);
    REQUIRE(ds.dim() == 2);
    CHECK(ds.inputs(0, 0) == 1.5);
    CHECK(ds.inputs(0, 1) == -2.25);
    CHECK(ds.inputs(1, 0) == 0.125);
    CHECK(ds.inputs(1, 1) == 3.0);
    CHECK(ds.inputs(2, 0) == -7.0);
    CHECK(ds.inputs(2, 1) == 0.5);
    REQUIRE(ds.labels == std::vector<std::size_t>{0, 1, 0});
    CHECK(ds.num_classes == 2);
}

TEST_CASE("csv label ids follow first appearance") {
    auto path = temp_file("labels.csv");
    {
        std::ofstream out(path);
        out << "x,label\n";
        out << "1,z\n2,q\n3,z\n4,m\n5,q\n";
    }
    auto ds = load_csv(path.string(), "label");
    REQUIRE(ds.labels == std::vector<std::size_t>{0, 1, 0, 2, 1});
    CHECK(ds.num_classes == 3);
}

TEST_CASE("csv loader reports structured errors") {
    REQUIRE_THROWS_AS(load_csv("/nonexistent/definitely_missing.csv", "label"), IoError);

    auto empty = temp_file("empty.csv");
    { std::ofstream out(empty); }
    REQUIRE_THROWS_AS(load_csv(empty.string(), "label"), ParseError);

    auto bad = temp_file("bad_cell.csv");
    {
        std::ofstream out(bad);
        out << "f0,label\n1.0,a\noops,b\n";
    }
    try {
        load_csv(bad.string(), "label");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("line 3") != std::string::npos);
        CHECK(msg.find("f0") != std::string::npos);
    }

    auto no_label = temp_file("no_label.csv");
    {
        std::ofstream out(no_label);
        out << "f0,f1\n1,2\n";
    }
    REQUIRE_THROWS_AS(load_csv(no_label.string(), "label"), ParseError);
}

TEST_CASE("csv round-trip preserves a generated dataset to 1e-12") {
    RngState rng(7);
    auto ds = gen_gaussian_blobs(rng, 3, 40, 5, 4.0, 1.0);
    auto path = temp_file("roundtrip.csv");
    save_csv(path.string(), ds);
    auto back = load_csv(path.string(), "label");

    REQUIRE(back.size() == ds.size());
    REQUIRE(back.dim() == ds.dim());
    REQUIRE(back.labels == ds.labels);
    for (std::size_t i = 0; i < ds.size(); ++i)
        for (std::size_t j = 0; j < ds.dim(); ++j)
            CHECK(std::abs(back.inputs(i, j) - ds.inputs(i, j)) < 1e-12);
}

TEST_CASE("split partitions the dataset without loss or duplication") {
    RngState rng(8);
    auto ds = gen_gaussian_blobs(rng, 2, 100, 3, 4.0, 1.0);
    // Tag each row with a unique id in feature 0 for multiset accounting.
    for (std::size_t i = 0; i < ds.size(); ++i) ds.inputs(i, 0) = static_cast<double>(i);

    SplitSpec spec{0.6, 0.2, 0.2, 42};
    auto parts = split(ds, spec);
    CHECK(parts.train.size() == 120);
    CHECK(parts.dev.size() == 40);
    CHECK(parts.test.size() == 40);

    std::multiset<double> ids;
    for (const auto* part : {&parts.train, &parts.dev, &parts.test})
        for (std::size_t i = 0; i < part->size(); ++i) ids.insert(part->inputs(i, 0));
    REQUIRE(ids.size() == 200);
    std::size_t expect = 0;
    for (double id : ids) CHECK(id == static_cast<double>(expect++));
}

TEST_CASE("split is deterministic in its seed") {
    RngState rng(9);
    auto ds = gen_gaussian_blobs(rng, 2, 50, 3, 4.0, 1.0);
    SplitSpec spec{0.6, 0.2, 0.2, 7};
    auto a = split(ds, spec);
    auto b = split(ds, spec);
    REQUIRE(a.train.labels == b.train.labels);
    for (std::size_t i = 0; i < a.train.size(); ++i)
        for (std::size_t j = 0; j < a.train.dim(); ++j)
            CHECK(a.train.inputs(i, j) == b.train.inputs(i, j));
}

TEST_CASE("split rejects invalid specs and empty partitions") {
    RngState rng(10);
    auto ds = gen_gaussian_blobs(rng, 2, 5, 2, 4.0, 1.0);
    REQUIRE_THROWS_AS(split(ds, SplitSpec{0.5, 0.5, 0.5, 0}), ValueError);
    REQUIRE_THROWS_AS(split(ds, SplitSpec{1.0, 0.0, 0.0, 0}), ValueError);
    REQUIRE_THROWS_AS(split(ds, SplitSpec{0.98, 0.01, 0.01, 0}), ValueError);
}

TEST_CASE("train split class proportions track global proportions") {
    RngState rng(11);
    auto ds = gen_gaussian_blobs(rng, 4, 500, 4, 4.0, 1.0);
    auto parts = split(ds, SplitSpec{0.6, 0.2, 0.2, 3});
    auto counts = parts.train.class_counts();
    for (auto c : counts) {
        const double prop = static_cast<double>(c) / static_cast<double>(parts.train.size());
        CHECK(std::abs(prop - 0.25) < 0.05);
    }
}

TEST_CASE("minibatches cover the dataset exactly") {
    RngState rng(12);
    auto ds = gen_gaussian_blobs(rng, 2, 5, 2, 4.0, 1.0);
    for (std::size_t i = 0; i < ds.size(); ++i) ds.inputs(i, 0) = static_cast<double>(i);

    RngState batch_rng(0);
    auto batches = minibatches(ds, 5, batch_rng);
    REQUIRE(batches.size() == 2);
    std::multiset<double> ids;
    for (const auto& b : batches) {
        REQUIRE(b.inputs.rows() == 5);
        for (std::size_t i = 0; i < b.inputs.rows(); ++i) ids.insert(b.inputs(i, 0));
    }
    REQUIRE(ids.size() == 10);
    std::size_t expect = 0;
    for (double id : ids) CHECK(id == static_cast<double>(expect++));
}

TEST_CASE("a trailing singleton batch is dropped") {
    RngState rng(13);
    auto ds = gen_gaussian_blobs(rng, 2, 8, 2, 4.0, 1.0);  // 16 rows
    for (std::size_t i = 0; i < ds.size(); ++i) ds.inputs(i, 0) = static_cast<double>(i);

    RngState batch_rng(1);
    auto batches = minibatches(ds, 5, batch_rng);  // 5+5+5+1: tail dropped
    REQUIRE(batches.size() == 3);
    std::multiset<double> ids;
    for (const auto& b : batches)
        for (std::size_t i = 0; i < b.inputs.rows(); ++i) ids.insert(b.inputs(i, 0));
    CHECK(ids.size() == 15);

    RngState rng2(14);
    auto ds2 = gen_gaussian_blobs(rng2, 2, 4, 2, 4.0, 1.0);  // 8 rows
    RngState batch_rng2(2);
    auto batches2 = minibatches(ds2, 3, batch_rng2);  // 3+3+2: tail of 2 kept
    REQUIRE(batches2.size() == 3);
    CHECK(batches2.back().inputs.rows() == 2);
}

TEST_CASE("minibatch order is deterministic in the rng") {
    RngState rng(15);
    auto ds = gen_gaussian_blobs(rng, 2, 20, 2, 4.0, 1.0);
    RngState a(5), b(5);
    auto ba = minibatches(ds, 8, a);
    auto bb = minibatches(ds, 8, b);
    REQUIRE(ba.size() == bb.size());
    for (std::size_t k = 0; k < ba.size(); ++k) REQUIRE(ba[k].labels == bb[k].labels);
}

TEST_CASE("minibatches reject batch sizes below 2") {
    RngState rng(16);
    auto ds = gen_gaussian_blobs(rng, 2, 5, 2, 4.0, 1.0);
    RngState batch_rng(0);
    REQUIRE_THROWS_AS(minibatches(ds, 1, batch_rng), ValueError);
}

TEST_CASE("one_hot places a single 1 per row") {
    auto oh = one_hot({0, 2, 1}, 3);
    REQUIRE(oh.rows() == 3);
    REQUIRE(oh.cols() == 3);
    CHECK(oh(0, 0) == 1.0);
    CHECK(oh(1, 2) == 1.0);
    CHECK(oh(2, 1) == 1.0);
    double sum = 0.0;
    for (double v : oh.values()) sum += v;
    CHECK(sum == 3.0);
    REQUIRE_THROWS_AS(one_hot({3}, 3), ValueError);
}
