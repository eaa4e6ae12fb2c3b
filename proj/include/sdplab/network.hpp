#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sdplab/errors.hpp"
#include "sdplab/matrix.hpp"
#include "sdplab/rng.hpp"

namespace sdplab {

struct MaskedLinear {
    DenseMatrix W;           // out x in
    std::vector<double> b;   // out
    DenseMatrix M;           // out x in, entries in {0,1}
    bool prunable = true;

    std::size_t fan_in() const { return W.cols(); }
    std::size_t fan_out() const { return W.rows(); }

    DenseMatrix effective_weights() const { return hadamard(W, M); }
};

enum class Role { teacher, student };

class NetworkState {
public:
    std::vector<MaskedLinear> layers;
    Role role = Role::student;

    std::uint64_t version() const { return version_; }
    void bump_version() { version_ += 1; }

    std::size_t input_dim() const { return layers.front().fan_in(); }
    std::size_t output_dim() const { return layers.back().fan_out(); }

    void validate() const {
        if (layers.empty()) throw ValueError("network: no layers");
        for (std::size_t i = 0; i + 1 < layers.size(); ++i)
            if (layers[i].fan_out() != layers[i + 1].fan_in())
                throw DimensionError("network: layer " + std::to_string(i) + " emits " +
                                     std::to_string(layers[i].fan_out()) + ", layer " +
                                     std::to_string(i + 1) + " expects " +
                                     std::to_string(layers[i + 1].fan_in()));
        if (layers.back().prunable)
            throw ValueError("network: final classification layer must not be prunable");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const auto& l = layers[i];
            if (!l.W.same_shape(l.M))
                throw DimensionError("network: layer " + std::to_string(i) +
                                     " mask shape " + l.M.shape_str() + " vs weights " +
                                     l.W.shape_str());
            if (l.b.size() != l.fan_out())
                throw DimensionError("network: layer " + std::to_string(i) + " bias size");
            for (double m : l.M.values())
                if (m != 0.0 && m != 1.0)
                    throw ValueError("network: mask entries must be 0 or 1");
        }
    }

private:
    std::uint64_t version_ = 0;
};

// He-scaled Gaussian init for ReLU hidden layers; zero biases; full masks.
// widths = {input_dim, hidden..., num_classes}; the final layer is the
// classification layer and is never prunable.
inline NetworkState make_mlp(RngState& rng, const std::vector<std::size_t>& widths) {
    if (widths.size() < 2) throw ValueError("make_mlp: need at least input and output widths");
    NetworkState net;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        MaskedLinear layer;
        const std::size_t in = widths[i], out = widths[i + 1];
        if (in == 0 || out == 0) throw ValueError("make_mlp: zero layer width");
        layer.W = seeded_normal(rng, out, in, 0.0, std::sqrt(2.0 / static_cast<double>(in)));
        layer.b.assign(out, 0.0);
        layer.M = DenseMatrix(out, in, 1.0);
        layer.prunable = (i + 2 < widths.size());
        net.layers.push_back(std::move(layer));
    }
    net.validate();
    return net;
}

struct ForwardTrace {
    DenseMatrix inputs;
    std::vector<DenseMatrix> z;  // pre-activations per layer; z.back() is the logits
    std::vector<DenseMatrix> a;  // post-activations; a.back() == z.back() (linear head)
    std::uint64_t net_version = 0;

    const DenseMatrix& logits() const { return z.back(); }

    // Activation feeding the final layer: last hidden activation, or the raw
    // inputs for a single-layer net.
    const DenseMatrix& penultimate() const {
        return z.size() >= 2 ? a[z.size() - 2] : inputs;
    }
};

inline ForwardTrace forward(const NetworkState& net, const DenseMatrix& batch_inputs) {
    if (batch_inputs.cols() != net.input_dim())
        throw DimensionError("forward: input dim " + std::to_string(batch_inputs.cols()) +
                             ", network expects " + std::to_string(net.input_dim()));
    ForwardTrace trace;
    trace.inputs = batch_inputs;
    trace.net_version = net.version();
    const DenseMatrix* current = &trace.inputs;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const auto& layer = net.layers[l];
        DenseMatrix z = matmul(*current, transpose(layer.effective_weights()));
        for (std::size_t i = 0; i < z.rows(); ++i)
            for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += layer.b[j];
        DenseMatrix a = z;
        if (l + 1 < net.layers.size())
            for (double& v : a.values()) v = std::max(v, 0.0);
        trace.z.push_back(std::move(z));
        trace.a.push_back(std::move(a));
        current = &trace.a.back();
    }
    return trace;
}

inline DenseMatrix softmax_with_temperature(const DenseMatrix& logits, double tau) {
    if (!(tau > 0.0)) throw ValueError("softmax: temperature must be positive");
    DenseMatrix probs(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        double max_logit = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < logits.cols(); ++j)
            max_logit = std::max(max_logit, logits(i, j) / tau);
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            probs(i, j) = std::exp(logits(i, j) / tau - max_logit);
            sum += probs(i, j);
        }
        for (std::size_t j = 0; j < logits.cols(); ++j) probs(i, j) /= sum;
    }
    return probs;
}

struct LayerGrad {
    DenseMatrix dW;
    std::vector<double> db;
};
using Gradients = std::vector<LayerGrad>;

// Reverse-mode gradients through the masked MLP. output_gradient is d(loss)/
// d(logits). penultimate_gradient, when non-null, is an extra d(loss)/
// d(penultimate activation) term injected where that activation branches off
// (losses on hidden representations). Gradients at masked weights are zeroed.
inline Gradients backward(const NetworkState& net, const ForwardTrace& trace,
                          const DenseMatrix& output_gradient,
                          const DenseMatrix* penultimate_gradient = nullptr) {
    if (trace.net_version != net.version())
        throw StaleTraceError("backward: trace from network version " +
                              std::to_string(trace.net_version) + ", network is at " +
                              std::to_string(net.version()));
    const std::size_t L = net.layers.size();
    if (trace.z.size() != L) throw DimensionError("backward: trace depth mismatch");
    if (!output_gradient.same_shape(trace.z.back()))
        throw DimensionError("backward: output gradient " + output_gradient.shape_str() +
                             " vs logits " + trace.z.back().shape_str());
    if (penultimate_gradient != nullptr) {
        if (L < 2)
            throw ValueError("backward: hidden-representation gradient needs a hidden layer");
        if (!penultimate_gradient->same_shape(trace.a[L - 2]))
            throw DimensionError("backward: penultimate gradient shape " +
                                 penultimate_gradient->shape_str() + " vs activation " +
                                 trace.a[L - 2].shape_str());
    }

    Gradients grads(L);
    DenseMatrix delta = output_gradient;
    for (std::size_t l = L; l-- > 0;) {
        const auto& layer = net.layers[l];
        const DenseMatrix& a_prev = (l == 0) ? trace.inputs : trace.a[l - 1];
        grads[l].dW = hadamard(matmul(transpose(delta), a_prev), layer.M);
        grads[l].db.assign(layer.fan_out(), 0.0);
        for (std::size_t i = 0; i < delta.rows(); ++i)
            for (std::size_t j = 0; j < delta.cols(); ++j) grads[l].db[j] += delta(i, j);
        if (l == 0) break;
        DenseMatrix da = matmul(delta, layer.effective_weights());
        if (penultimate_gradient != nullptr && l == L - 1)
            add_scaled(da, *penultimate_gradient, 1.0);
        const DenseMatrix& z_prev = trace.z[l - 1];
        for (std::size_t i = 0; i < da.rows(); ++i)
            for (std::size_t j = 0; j < da.cols(); ++j)
                if (z_prev(i, j) <= 0.0) da(i, j) = 0.0;
        delta = std::move(da);
    }
    return grads;
}

struct OptimizerState {
    double learning_rate = 0.05;
    double momentum = 0.9;
    double clip_norm = 1.0;
    std::vector<LayerGrad> velocity;  // lazily sized to the network

    void validate() const {
        if (!(learning_rate > 0.0)) throw ValueError("optimizer: learning rate must be > 0");
        if (momentum < 0.0 || momentum >= 1.0)
            throw ValueError("optimizer: momentum must lie in [0,1)");
        if (!(clip_norm > 0.0)) throw ValueError("optimizer: clip_norm must be > 0");
    }
};

inline double gradient_global_norm(const Gradients& grads) {
    double sum = 0.0;
    for (const auto& g : grads) {
        for (double v : g.dW.values()) sum += v * v;
        for (double v : g.db) sum += v * v;
    }
    return std::sqrt(sum);
}

inline void sgd_step(NetworkState& net, OptimizerState& opt, Gradients grads) {
    opt.validate();
    if (grads.size() != net.layers.size())
        throw DimensionError("sgd_step: gradient count mismatch");
    for (std::size_t l = 0; l < grads.size(); ++l) {
        if (!grads[l].dW.same_shape(net.layers[l].W))
            throw DimensionError("sgd_step: layer " + std::to_string(l) + " gradient shape");
        for (double v : grads[l].dW.values())
            if (!std::isfinite(v)) throw DivergenceError("sgd_step: non-finite weight gradient");
        for (double v : grads[l].db)
            if (!std::isfinite(v)) throw DivergenceError("sgd_step: non-finite bias gradient");
    }

    const double norm = gradient_global_norm(grads);
    if (norm > opt.clip_norm) {
        const double scale = opt.clip_norm / norm;
        for (auto& g : grads) {
            scale_inplace(g.dW, scale);
            for (double& v : g.db) v *= scale;
        }
    }

    if (opt.velocity.empty()) {
        opt.velocity.resize(net.layers.size());
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            opt.velocity[l].dW = DenseMatrix(net.layers[l].W.rows(), net.layers[l].W.cols());
            opt.velocity[l].db.assign(net.layers[l].b.size(), 0.0);
        }
    }

    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto& layer = net.layers[l];
        auto& vel = opt.velocity[l];
        for (std::size_t i = 0; i < layer.W.size(); ++i) {
            vel.dW.values()[i] = opt.momentum * vel.dW.values()[i] + grads[l].dW.values()[i];
            layer.W.values()[i] -= opt.learning_rate * vel.dW.values()[i];
            if (layer.M.values()[i] == 0.0) layer.W.values()[i] = 0.0;
        }
        for (std::size_t j = 0; j < layer.b.size(); ++j) {
            vel.db[j] = opt.momentum * vel.db[j] + grads[l].db[j];
            layer.b[j] -= opt.learning_rate * vel.db[j];
        }
    }
    net.bump_version();
}

inline NetworkState snapshot_teacher(const NetworkState& net) {
    NetworkState teacher = net;
    teacher.role = Role::teacher;
    return teacher;
}

struct PrunableCounts {
    std::size_t remaining = 0;
    std::size_t total = 0;
    double fraction = 1.0;
};

inline PrunableCounts count_remaining(const NetworkState& net) {
    PrunableCounts counts;
    for (const auto& layer : net.layers) {
        if (!layer.prunable) continue;
        counts.total += layer.M.size();
        for (double m : layer.M.values())
            if (m != 0.0) counts.remaining += 1;
    }
    counts.fraction = counts.total == 0
                          ? 1.0
                          : static_cast<double>(counts.remaining) /
                                static_cast<double>(counts.total);
    return counts;
}

namespace detail {

inline void write_float_row(std::ostream& out, const double* values, std::size_t n) {
    char buf[64];
    for (std::size_t i = 0; i < n; ++i) {
        auto [ptr, ec] =
            std::to_chars(buf, buf + sizeof(buf), values[i], std::chars_format::general, 17);
        if (i) out << ' ';
        out.write(buf, ptr - buf);
    }
    out << '\n';
}

inline std::vector<double> read_float_row(std::istream& in, std::size_t n,
                                          const std::string& what) {
    std::string line;
    if (!std::getline(in, line))
        throw CheckpointError(CheckpointError::Kind::truncated, "missing " + what);
    std::vector<double> values;
    values.reserve(n);
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (p != end) {
        while (p != end && *p == ' ') ++p;
        if (p == end) break;
        double v = 0.0;
        auto [next, ec] = std::from_chars(p, end, v);
        if (ec != std::errc{})
            throw CheckpointError(CheckpointError::Kind::truncated, "bad float in " + what);
        values.push_back(v);
        p = next;
    }
    if (values.size() != n)
        throw CheckpointError(CheckpointError::Kind::shape,
                              what + ": expected " + std::to_string(n) + " values, got " +
                                  std::to_string(values.size()));
    return values;
}

}  // namespace detail

inline void save_checkpoint(const NetworkState& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "SDPLAB-CKPT v1\n";
    out << "layers " << net.layers.size() << '\n';
    for (const auto& layer : net.layers) {
        out << "layer " << layer.fan_out() << ' ' << layer.fan_in() << ' '
            << (layer.prunable ? 1 : 0) << '\n';
        for (std::size_t i = 0; i < layer.fan_out(); ++i)
            detail::write_float_row(out, layer.W.data() + i * layer.fan_in(), layer.fan_in());
        detail::write_float_row(out, layer.b.data(), layer.b.size());
        for (std::size_t i = 0; i < layer.fan_out(); ++i) {
            for (std::size_t j = 0; j < layer.fan_in(); ++j) {
                if (j) out << ' ';
                out << (layer.M(i, j) != 0.0 ? 1 : 0);
            }
            out << '\n';
        }
    }
    if (!out) throw IoError("write failed for " + path);
}

inline NetworkState load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line))
        throw CheckpointError(CheckpointError::Kind::truncated, path + ": empty file");
    while (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "SDPLAB-CKPT v1")
        throw CheckpointError(CheckpointError::Kind::version,
                              path + ": unrecognized header '" + line + "'");

    std::size_t num_layers = 0;
    if (!(in >> line >> num_layers) || line != "layers")
        throw CheckpointError(CheckpointError::Kind::truncated, path + ": missing layer count");
    std::getline(in, line);

    NetworkState net;
    for (std::size_t l = 0; l < num_layers; ++l) {
        std::size_t out_dim = 0, in_dim = 0;
        int prunable = 0;
        if (!(in >> line >> out_dim >> in_dim >> prunable) || line != "layer")
            throw CheckpointError(CheckpointError::Kind::truncated,
                                  path + ": missing record for layer " + std::to_string(l));
        if (out_dim == 0 || in_dim == 0)
            throw CheckpointError(CheckpointError::Kind::shape,
                                  path + ": zero dimension in layer " + std::to_string(l));
        std::getline(in, line);

        MaskedLinear layer;
        layer.W = DenseMatrix(out_dim, in_dim);
        layer.M = DenseMatrix(out_dim, in_dim);
        layer.prunable = prunable != 0;
        for (std::size_t i = 0; i < out_dim; ++i) {
            auto row = detail::read_float_row(in, in_dim, "weights of layer " + std::to_string(l));
            for (std::size_t j = 0; j < in_dim; ++j) layer.W(i, j) = row[j];
        }
        layer.b = detail::read_float_row(in, out_dim, "bias of layer " + std::to_string(l));
        for (std::size_t i = 0; i < out_dim; ++i) {
            auto row = detail::read_float_row(in, in_dim, "mask of layer " + std::to_string(l));
            for (std::size_t j = 0; j < in_dim; ++j) {
                if (row[j] != 0.0 && row[j] != 1.0)
                    throw CheckpointError(CheckpointError::Kind::shape,
                                          path + ": mask entry not 0/1");
                layer.M(i, j) = row[j];
            }
        }
        net.layers.push_back(std::move(layer));
    }
    try {
        net.validate();
    } catch (const Error& e) {
        throw CheckpointError(CheckpointError::Kind::shape, path + ": " + e.what());
    }
    return net;
}

inline std::size_t argmax_row(const DenseMatrix& m, std::size_t row) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < m.cols(); ++j)
        if (m(row, j) > m(row, best)) best = j;
    return best;
}

inline double evaluate_accuracy(const NetworkState& net, const DenseMatrix& inputs,
                                const std::vector<std::size_t>& labels) {
    if (inputs.rows() != labels.size())
        throw DimensionError("evaluate_accuracy: rows vs labels");
    if (labels.empty()) throw ValueError("evaluate_accuracy: empty batch");
    const ForwardTrace trace = forward(net, inputs);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (argmax_row(trace.logits(), i) == labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace sdplab
