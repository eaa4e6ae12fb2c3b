#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "sdplab/network.hpp"

using namespace sdplab;

namespace {

std::filesystem::path temp_file(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "sdplab_network_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Loop-level re-implementation of the masked forward pass.
DenseMatrix forward_oracle(const NetworkState& net, const DenseMatrix& x) {
    DenseMatrix a = x;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& layer = net.layers[l];
        DenseMatrix z(a.rows(), layer.fan_out());
        for (std::size_t i = 0; i < a.rows(); ++i)
            for (std::size_t o = 0; o < layer.fan_out(); ++o) {
                double acc = layer.b[o];
                for (std::size_t k = 0; k < layer.fan_in(); ++k)
                    acc += layer.W(o, k) * layer.M(o, k) * a(i, k);
                z(i, o) = acc;
            }
        if (l + 1 < net.layers.size())
            for (double& v : z.values()) v = std::max(v, 0.0);
        a = std::move(z);
    }
    return a;
}

NetworkState small_net(std::uint64_t seed, std::vector<std::size_t> widths = {4, 6, 5, 3}) {
    RngState rng(seed);
    return make_mlp(rng, widths);
}

// Central finite differences over every parameter against analytic gradients.
void check_against_fd(NetworkState& net, const std::function<double(const NetworkState&)>& loss,
                      const Gradients& analytic, double tol = 1e-4) {
    const double h = 1e-5;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto& layer = net.layers[l];
        for (std::size_t i = 0; i < layer.W.size(); ++i) {
            if (layer.M.values()[i] == 0.0) {
                CHECK(analytic[l].dW.values()[i] == 0.0);
                continue;
            }
            const double saved = layer.W.values()[i];
            layer.W.values()[i] = saved + h;
            const double up = loss(net);
            layer.W.values()[i] = saved - h;
            const double down = loss(net);
            layer.W.values()[i] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double a = analytic[l].dW.values()[i];
            const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6});
            CHECK(rel < tol);
        }
        for (std::size_t j = 0; j < layer.b.size(); ++j) {
            const double saved = layer.b[j];
            layer.b[j] = saved + h;
            const double up = loss(net);
            layer.b[j] = saved - h;
            const double down = loss(net);
            layer.b[j] = saved;
            const double fd = (up - down) / (2.0 * h);
            const double a = analytic[l].db[j];
            const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6});
            CHECK(rel < tol);
        }
    }
}

}  // namespace

TEST_CASE("all-zero masks leave only the final bias") {
    NetworkState net = small_net(1);
    for (auto& layer : net.layers)
        for (double& m : layer.M.values()) m = 0.0;
    RngState rng(2);
    for (double& b : net.layers.back().b) b = rng.next_normal();

    DenseMatrix x = seeded_normal(rng, 7, 4);
    auto trace = forward(net, x);
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(trace.logits()(i, j) == net.layers.back().b[j]);
}

TEST_CASE("single-layer net computes a plain affine map") {
    NetworkState net;
    MaskedLinear layer;
    layer.W = DenseMatrix{{1.0, 2.0}, {3.0, -1.0}};
    layer.b = {0.5, -0.5};
    layer.M = DenseMatrix(2, 2, 1.0);
    layer.prunable = false;
    net.layers.push_back(layer);
    net.validate();

    DenseMatrix x{{1.0, 1.0}};
    auto trace = forward(net, x);
    CHECK(trace.logits()(0, 0) == 3.5);   // 1+2+0.5
    CHECK(trace.logits()(0, 1) == 1.5);   // 3-1-0.5
}

TEST_CASE("forward matches the loop-level oracle") {
    for (std::uint64_t seed : {3u, 4u, 5u}) {
        NetworkState net = small_net(seed);
        // Prune some weights so masking is exercised.
        for (auto& layer : net.layers)
            if (layer.prunable)
                for (std::size_t i = 0; i < layer.M.size(); i += 3) layer.M.values()[i] = 0.0;
        RngState rng(seed + 100);
        DenseMatrix x = seeded_normal(rng, 9, 4);
        auto trace = forward(net, x);
        DenseMatrix expect = forward_oracle(net, x);
        for (std::size_t i = 0; i < expect.size(); ++i)
            CHECK(std::abs(trace.logits().values()[i] - expect.values()[i]) < 1e-12);
    }
}

TEST_CASE("forward rejects mismatched input width") {
    NetworkState net = small_net(6);
    DenseMatrix x(3, 5);
    REQUIRE_THROWS_AS(forward(net, x), DimensionError);
}

TEST_CASE("softmax of uniform logits is uniform at any temperature") {
    DenseMatrix logits{{0.0, 0.0, 0.0}};
    for (double tau : {0.5, 1.0, 2.0, 9.0}) {
        auto p = softmax_with_temperature(logits, tau);
        for (std::size_t j = 0; j < 3; ++j) CHECK(p(0, j) == Catch::Approx(1.0 / 3.0).margin(1e-15));
    }
}

TEST_CASE("larger temperature flattens the distribution") {
    DenseMatrix logits{{1.0, 2.0, 3.0}};
    double prev_max = 1.0;
    for (double tau : {0.25, 0.5, 1.0, 2.0, 4.0, 8.0}) {
        auto p = softmax_with_temperature(logits, tau);
        double mx = std::max({p(0, 0), p(0, 1), p(0, 2)});
        CHECK(mx < prev_max);
        prev_max = mx;
    }
}

TEST_CASE("softmax matches direct evaluation on [1,2,3]") {
    DenseMatrix logits{{1.0, 2.0, 3.0}};
    auto p = softmax_with_temperature(logits, 1.0);
    CHECK(p(0, 0) == Catch::Approx(0.0900).margin(1e-4));
    CHECK(p(0, 1) == Catch::Approx(0.2447).margin(1e-4));
    CHECK(p(0, 2) == Catch::Approx(0.6652).margin(1e-4));
}

TEST_CASE("softmax rows sum to one and are shift-invariant") {
    RngState rng(7);
    DenseMatrix logits = seeded_normal(rng, 20, 6, 0.0, 3.0);
    auto p = softmax_with_temperature(logits, 0.9);
    for (std::size_t i = 0; i < 20; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < 6; ++j) sum += p(i, j);
        CHECK(std::abs(sum - 1.0) < 1e-12);
    }
    DenseMatrix shifted = logits;
    for (std::size_t i = 0; i < 20; ++i)
        for (std::size_t j = 0; j < 6; ++j) shifted(i, j) += 5.5;
    auto q = softmax_with_temperature(shifted, 0.9);
    for (std::size_t i = 0; i < p.size(); ++i)
        CHECK(std::abs(p.values()[i] - q.values()[i]) < 1e-12);
}

TEST_CASE("softmax rejects non-positive temperature") {
    DenseMatrix logits{{1.0, 2.0}};
    REQUIRE_THROWS_AS(softmax_with_temperature(logits, 0.0), ValueError);
    REQUIRE_THROWS_AS(softmax_with_temperature(logits, -1.0), ValueError);
}

TEST_CASE("zero output gradient yields zero parameter gradients") {
    NetworkState net = small_net(8);
    RngState rng(9);
    DenseMatrix x = seeded_normal(rng, 5, 4);
    auto trace = forward(net, x);
    auto grads = backward(net, trace, DenseMatrix(5, 3, 0.0));
    for (const auto& g : grads) {
        for (double v : g.dW.values()) CHECK(v == 0.0);
        for (double v : g.db) CHECK(v == 0.0);
    }
}

TEST_CASE("single linear layer gradient is the closed-form product") {
    NetworkState net;
    MaskedLinear layer;
    RngState rng(10);
    layer.W = seeded_normal(rng, 3, 4);
    layer.b = {0.1, 0.2, 0.3};
    layer.M = DenseMatrix(3, 4, 1.0);
    layer.prunable = false;
    net.layers.push_back(layer);

    DenseMatrix x = seeded_normal(rng, 6, 4);
    DenseMatrix delta = seeded_normal(rng, 6, 3);
    auto trace = forward(net, x);
    auto grads = backward(net, trace, delta);

    DenseMatrix expect = matmul(transpose(delta), x);
    for (std::size_t i = 0; i < expect.size(); ++i)
        CHECK(std::abs(grads[0].dW.values()[i] - expect.values()[i]) < 1e-12);
    for (std::size_t j = 0; j < 3; ++j) {
        double col = 0.0;
        for (std::size_t i = 0; i < 6; ++i) col += delta(i, j);
        CHECK(std::abs(grads[0].db[j] - col) < 1e-12);
    }
}

TEST_CASE("backward matches finite differences for a quadratic head loss") {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        NetworkState net = small_net(seed);
        for (auto& layer : net.layers)
            if (layer.prunable)
                for (std::size_t i = 0; i < layer.M.size(); i += 4) layer.M.values()[i] = 0.0;
        RngState rng(seed + 50);
        DenseMatrix x = seeded_normal(rng, 6, 4);

        auto loss = [&x](const NetworkState& n) {
            auto t = forward(n, x);
            double sum = 0.0;
            for (double v : t.logits().values()) sum += 0.5 * v * v;
            return sum;
        };
        auto trace = forward(net, x);
        auto analytic = backward(net, trace, trace.logits());
        check_against_fd(net, loss, analytic);
    }
}

TEST_CASE("penultimate gradient injection matches finite differences") {
    NetworkState net = small_net(14);
    RngState rng(15);
    DenseMatrix x = seeded_normal(rng, 6, 4);
    DenseMatrix coeff = seeded_normal(rng, 6, 5);  // penultimate width is 5

    auto loss = [&x, &coeff](const NetworkState& n) {
        auto t = forward(n, x);
        const DenseMatrix& pen = t.penultimate();
        double sum = 0.0;
        for (std::size_t i = 0; i < pen.size(); ++i)
            sum += coeff.values()[i] * pen.values()[i];
        return sum;
    };
    auto trace = forward(net, x);
    auto analytic = backward(net, trace, DenseMatrix(6, 3, 0.0), &coeff);
    for (double v : analytic.back().dW.values()) CHECK(v == 0.0);
    check_against_fd(net, loss, analytic);
}

TEST_CASE("backward rejects a stale trace") {
    NetworkState net = small_net(16);
    RngState rng(17);
    DenseMatrix x = seeded_normal(rng, 4, 4);
    auto trace = forward(net, x);

    OptimizerState opt;
    auto grads = backward(net, trace, DenseMatrix(4, 3, 0.1));
    sgd_step(net, opt, grads);
    REQUIRE_THROWS_AS(backward(net, trace, DenseMatrix(4, 3, 0.1)), StaleTraceError);
}

TEST_CASE("small gradients pass through clipping untouched") {
    NetworkState net;
    MaskedLinear layer;
    layer.W = DenseMatrix(1, 2, 1.0);
    layer.b = {0.0};
    layer.M = DenseMatrix(1, 2, 1.0);
    layer.prunable = false;
    net.layers.push_back(layer);

    Gradients grads(1);
    grads[0].dW = DenseMatrix{{0.3, 0.4}};  // norm 0.5 <= clip 1.0
    grads[0].db = {0.0};
    OptimizerState opt;
    opt.learning_rate = 0.1;
    opt.momentum = 0.0;
    sgd_step(net, opt, grads);
    CHECK(net.layers[0].W(0, 0) == Catch::Approx(1.0 - 0.1 * 0.3).margin(1e-15));
    CHECK(net.layers[0].W(0, 1) == Catch::Approx(1.0 - 0.1 * 0.4).margin(1e-15));
}

TEST_CASE("gradients at twice the cap are halved exactly") {
    NetworkState net;
    MaskedLinear layer;
    layer.W = DenseMatrix(1, 2, 0.0);
    layer.b = {0.0};
    layer.M = DenseMatrix(1, 2, 1.0);
    layer.prunable = false;
    net.layers.push_back(layer);

    Gradients grads(1);
    grads[0].dW = DenseMatrix{{1.2, 1.6}};  // norm 2.0 = 2 x clip
    grads[0].db = {0.0};
    OptimizerState opt;
    opt.learning_rate = 1.0;
    opt.momentum = 0.0;
    opt.clip_norm = 1.0;
    sgd_step(net, opt, grads);
    CHECK(net.layers[0].W(0, 0) == -0.6);
    CHECK(net.layers[0].W(0, 1) == -0.8);
}

TEST_CASE("momentum accumulates velocity across steps") {
    NetworkState net;
    MaskedLinear layer;
    layer.W = DenseMatrix(1, 1, 0.0);
    layer.b = {0.0};
    layer.M = DenseMatrix(1, 1, 1.0);
    layer.prunable = false;
    net.layers.push_back(layer);

    OptimizerState opt;
    opt.learning_rate = 1.0;
    opt.momentum = 0.5;
    opt.clip_norm = 100.0;
    Gradients grads(1);
    grads[0].dW = DenseMatrix(1, 1, 1.0);
    grads[0].db = {0.0};
    sgd_step(net, opt, grads);   // v=1, w=-1
    sgd_step(net, opt, grads);   // v=1.5, w=-2.5
    CHECK(net.layers[0].W(0, 0) == -2.5);
}

TEST_CASE("masked weights stay exactly zero through 100 update steps") {
    NetworkState net = small_net(18);
    auto& target = net.layers[0];
    for (std::size_t i = 0; i < target.M.size(); i += 2) {
        target.M.values()[i] = 0.0;
        target.W.values()[i] = 0.0;
    }
    net.bump_version();

    RngState rng(19);
    DenseMatrix x = seeded_normal(rng, 8, 4);
    OptimizerState opt;
    opt.learning_rate = 0.01;
    for (int step = 0; step < 100; ++step) {
        auto trace = forward(net, x);
        auto grads = backward(net, trace, seeded_normal(rng, 8, 3, 0.0, 0.5));
        sgd_step(net, opt, grads);
    }
    for (std::size_t i = 0; i < target.M.size(); i += 2) CHECK(target.W.values()[i] == 0.0);
}

TEST_CASE("non-finite gradients are rejected") {
    NetworkState net = small_net(20);
    RngState rng(21);
    DenseMatrix x = seeded_normal(rng, 3, 4);
    auto trace = forward(net, x);
    auto grads = backward(net, trace, DenseMatrix(3, 3, 0.1));
    grads[1].dW(0, 0) = std::numeric_limits<double>::quiet_NaN();
    OptimizerState opt;
    REQUIRE_THROWS_AS(sgd_step(net, opt, grads), DivergenceError);
}

TEST_CASE("teacher snapshot is an independent deep copy") {
    NetworkState student = small_net(22);
    NetworkState teacher = snapshot_teacher(student);
    CHECK(teacher.role == Role::teacher);

    RngState rng(23);
    DenseMatrix x = seeded_normal(rng, 5, 4);
    auto before_student = forward(student, x);
    auto before_teacher = forward(teacher, x);
    for (std::size_t i = 0; i < before_student.logits().size(); ++i)
        CHECK(before_student.logits().values()[i] == before_teacher.logits().values()[i]);

    auto ckpt_src = temp_file("src.ckpt");
    auto ckpt_teacher = temp_file("teacher.ckpt");
    save_checkpoint(student, ckpt_src.string());
    save_checkpoint(teacher, ckpt_teacher.string());
    CHECK(slurp(ckpt_src) == slurp(ckpt_teacher));

    OptimizerState opt;
    auto grads = backward(student, before_student, DenseMatrix(5, 3, 0.2));
    sgd_step(student, opt, grads);
    auto after_teacher = forward(teacher, x);
    for (std::size_t i = 0; i < after_teacher.logits().size(); ++i)
        CHECK(after_teacher.logits().values()[i] == before_teacher.logits().values()[i]);
}

TEST_CASE("checkpoint save-load-save is byte-identical") {
    NetworkState net = small_net(24);
    for (auto& layer : net.layers)
        if (layer.prunable)
            for (std::size_t i = 0; i < layer.M.size(); i += 5) {
                layer.M.values()[i] = 0.0;
                layer.W.values()[i] = 0.0;
            }
    auto p1 = temp_file("rt1.ckpt");
    auto p2 = temp_file("rt2.ckpt");
    save_checkpoint(net, p1.string());
    auto loaded = load_checkpoint(p1.string());
    save_checkpoint(loaded, p2.string());
    REQUIRE(slurp(p1) == slurp(p2));
}

TEST_CASE("checkpoint round-trip preserves forward outputs to the bit") {
    NetworkState net = small_net(25);
    auto p = temp_file("bits.ckpt");
    save_checkpoint(net, p.string());
    auto loaded = load_checkpoint(p.string());

    RngState rng(26);
    for (int trial = 0; trial < 100; ++trial) {
        DenseMatrix x = seeded_normal(rng, 1, 4, 0.0, 2.0);
        auto a = forward(net, x);
        auto b = forward(loaded, x);
        for (std::size_t i = 0; i < a.logits().size(); ++i)
            REQUIRE(a.logits().values()[i] == b.logits().values()[i]);
    }
}

TEST_CASE("checkpoint errors are classified") {
    auto p = temp_file("hdr.ckpt");
    {
        std::ofstream out(p);
        out << "SDPLAB-CKPT v9\nlayers 0\n";
    }
    try {
        load_checkpoint(p.string());
        FAIL("expected version error");
    } catch (const CheckpointError& e) {
        CHECK(e.kind == CheckpointError::Kind::version);
    }

    NetworkState net = small_net(27);
    auto full = temp_file("full.ckpt");
    save_checkpoint(net, full.string());
    std::string text = slurp(full);
    auto trunc = temp_file("trunc.ckpt");
    {
        std::ofstream out(trunc, std::ios::binary);
        out << text.substr(0, text.size() / 2);
    }
    try {
        load_checkpoint(trunc.string());
        FAIL("expected truncation error");
    } catch (const CheckpointError& e) {
        CHECK((e.kind == CheckpointError::Kind::truncated ||
               e.kind == CheckpointError::Kind::shape));
    }

    auto bad_shape = temp_file("shape.ckpt");
    {
        std::ofstream out(bad_shape);
        out << "SDPLAB-CKPT v1\nlayers 1\nlayer 2 2 0\n1 2\n3 4\n0.5 0.5\n1 1\n1 1 1\n";
    }
    try {
        load_checkpoint(bad_shape.string());
        FAIL("expected shape error");
    } catch (const CheckpointError& e) {
        CHECK(e.kind == CheckpointError::Kind::shape);
    }

    REQUIRE_THROWS_AS(load_checkpoint("/nonexistent/nope.ckpt"), IoError);
}

TEST_CASE("count_remaining tracks only prunable layers") {
    RngState rng(28);
    NetworkState net = make_mlp(rng, {5, 2, 3});  // one prunable 2x5 layer
    auto fresh = count_remaining(net);
    CHECK(fresh.total == 10);
    CHECK(fresh.remaining == 10);
    CHECK(fresh.fraction == 1.0);

    auto& layer = net.layers[0];
    for (std::size_t i = 0; i < 5; ++i) layer.M.values()[i] = 0.0;
    auto half = count_remaining(net);
    CHECK(half.remaining == 5);
    CHECK(half.fraction == 0.5);
}

TEST_CASE("repeated 10%-of-remaining masking tracks the geometric series") {
    RngState rng(29);
    NetworkState net = make_mlp(rng, {25, 40, 4});  // prunable layer: 1000 weights
    auto& layer = net.layers[0];
    const std::size_t total = layer.M.size();
    REQUIRE(total == 1000);

    std::size_t remaining = total;
    for (int k = 1; k <= 15; ++k) {
        const auto to_prune =
            static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(remaining)));
        std::size_t cleared = 0;
        for (std::size_t i = 0; i < layer.M.size() && cleared < to_prune; ++i)
            if (layer.M.values()[i] == 1.0) {
                layer.M.values()[i] = 0.0;
                ++cleared;
            }
        remaining -= cleared;
        auto counts = count_remaining(net);
        CHECK(counts.remaining == remaining);
        const double expect = std::pow(0.9, k);
        CHECK(std::abs(counts.fraction - expect) <
              (static_cast<double>(k) + 1.0) / static_cast<double>(total));
    }
}
