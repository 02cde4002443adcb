#pragma once

#include <cmath>
#include <cstdint>
#include <utility>

#include "mops/common.hpp"
#include "mops/rng.hpp"

namespace mops {

enum class Activation { identity, tanh_act, relu };

struct LayerSpec {
    enum class Kind { dense, activation };
    Kind kind = Kind::dense;
    int in_dim = 0;
    int out_dim = 0;
    Activation act = Activation::identity;

    static LayerSpec dense(int in, int out) {
        if (in <= 0 || out <= 0) throw std::invalid_argument("LayerSpec: nonpositive dims");
        return LayerSpec{Kind::dense, in, out, Activation::identity};
    }
    static LayerSpec activation(Activation a, int width) {
        if (width <= 0) throw std::invalid_argument("LayerSpec: nonpositive width");
        return LayerSpec{Kind::activation, width, width, a};
    }
    long long param_count() const {
        return kind == Kind::dense ? static_cast<long long>(in_dim) * out_dim + out_dim : 0;
    }
};

enum class Part { agent, shared, full };
enum class Scheme { none, share_top, share_deep };
enum class Phase { forward, backward, inference };

inline const char* to_string(Scheme s) {
    switch (s) {
        case Scheme::none: return "none";
        case Scheme::share_top: return "share_top";
        case Scheme::share_deep: return "share_deep";
    }
    return "?";
}

// Layered model split at `boundary` into an agent-specific front part
// (layers [0, boundary)) and a shared back part (layers [boundary, n)).
// `embedding_block` names the dense block whose output is the coordination
// embedding; split_model derives scheme boundaries from it.
struct ModelSpec {
    std::vector<LayerSpec> layers;
    int boundary = 0;
    int embedding_block = 0;

    void validate() const {
        if (boundary < 0 || boundary > static_cast<int>(layers.size()))
            throw std::invalid_argument("ModelSpec: boundary out of range");
        for (size_t k = 0; k + 1 < layers.size(); ++k)
            if (layers[k].out_dim != layers[k + 1].in_dim)
                throw std::invalid_argument("ModelSpec: layer dimension chain broken");
    }

    std::pair<int, int> layer_range(Part part) const {
        switch (part) {
            case Part::agent: return {0, boundary};
            case Part::shared: return {boundary, static_cast<int>(layers.size())};
            case Part::full: return {0, static_cast<int>(layers.size())};
        }
        return {0, 0};
    }

    int input_dim(Part part) const {
        auto [lo, hi] = layer_range(part);
        if (lo == hi) return -1;  // empty part: identity map, any width
        return layers[lo].in_dim;
    }
    int output_dim(Part part) const {
        auto [lo, hi] = layer_range(part);
        if (lo == hi) return -1;
        return layers[hi - 1].out_dim;
    }

    long long param_count(Part part = Part::full) const {
        auto [lo, hi] = layer_range(part);
        long long n = 0;
        for (int k = lo; k < hi; ++k) n += layers[k].param_count();
        return n;
    }

    long long layer_offset(int layer) const {
        long long off = 0;
        for (int k = 0; k < layer; ++k) off += layers[k].param_count();
        return off;
    }

    // Dense blocks: a dense layer plus its trailing activation layers.
    std::vector<std::pair<int, int>> blocks() const {
        std::vector<std::pair<int, int>> out;
        size_t k = 0;
        while (k < layers.size()) {
            if (layers[k].kind != LayerSpec::Kind::dense)
                throw std::invalid_argument("ModelSpec: activation layer before first dense");
            size_t e = k + 1;
            while (e < layers.size() && layers[e].kind == LayerSpec::Kind::activation) ++e;
            out.emplace_back(static_cast<int>(k), static_cast<int>(e));
            k = e;
        }
        return out;
    }
};

// Flat parameter storage for one model; layout is per-layer [W row-major, b].
struct ParamVector {
    Vec values;

    static ParamVector zeros(const ModelSpec& spec) {
        return ParamVector{Vec(static_cast<size_t>(spec.param_count()), 0.0)};
    }
    size_t size() const { return values.size(); }
};

// Scaled-uniform init, U(-1/sqrt(in), 1/sqrt(in)) per dense layer, weights
// then biases, drawn in layer order from the given stream.
inline void init_params_range(const ModelSpec& spec, int lo, int hi, Rng& rng, ParamVector& params) {
    if (params.size() != static_cast<size_t>(spec.param_count()))
        throw std::invalid_argument("init_params_range: size mismatch");
    for (int k = lo; k < hi; ++k) {
        const auto& l = spec.layers[k];
        if (l.kind != LayerSpec::Kind::dense) continue;
        double s = 1.0 / std::sqrt(static_cast<double>(l.in_dim));
        long long off = spec.layer_offset(k);
        for (long long i = 0; i < l.param_count(); ++i)
            params.values[off + i] = rng.uniform(-s, s);
    }
}

inline ParamVector init_params(const ModelSpec& spec, Rng& rng) {
    ParamVector p = ParamVector::zeros(spec);
    init_params_range(spec, 0, static_cast<int>(spec.layers.size()), rng, p);
    return p;
}

// Retained per-layer inputs from one forward pass; `tag` carries the round
// index so a stale cache is rejected at backward time.
struct ForwardCache {
    int first_layer = 0;
    int last_layer = 0;
    std::vector<Vec> inputs;
    int64_t tag = -1;
};

struct FlopCounter {
    long long flops = 0;
};

inline Vec forward(const ModelSpec& spec, const ParamVector& params, Part part, const Vec& input,
                   ForwardCache* cache = nullptr, FlopCounter* fc = nullptr) {
    auto [lo, hi] = spec.layer_range(part);
    if (lo < hi && static_cast<int>(input.size()) != spec.layers[lo].in_dim)
        throw std::invalid_argument("forward: input dimension mismatch");
    if (cache) {
        cache->first_layer = lo;
        cache->last_layer = hi;
        cache->inputs.clear();
    }
    Vec a = input;
    for (int k = lo; k < hi; ++k) {
        const auto& l = spec.layers[k];
        if (cache) cache->inputs.push_back(a);
        if (l.kind == LayerSpec::Kind::dense) {
            Vec y(static_cast<size_t>(l.out_dim));
            const double* w = params.values.data() + spec.layer_offset(k);
            const double* b = w + static_cast<long long>(l.in_dim) * l.out_dim;
            for (int o = 0; o < l.out_dim; ++o) {
                double s = b[o];
                const double* row = w + static_cast<long long>(o) * l.in_dim;
                for (int i = 0; i < l.in_dim; ++i) s += row[i] * a[i];
                y[o] = s;
            }
            if (fc) fc->flops += 2LL * l.in_dim * l.out_dim;
            a = std::move(y);
        } else {
            switch (l.act) {
                case Activation::identity: break;
                case Activation::tanh_act:
                    for (auto& x : a) x = std::tanh(x);
                    break;
                case Activation::relu:
                    for (auto& x : a) x = x > 0.0 ? x : 0.0;
                    break;
            }
        }
    }
    if (!all_finite(a)) throw NumericError("forward: non-finite output");
    return a;
}

struct BackwardResult {
    Vec param_grads;  // layout of the selected part only
    Vec input_grad;
};

// Exact gradients of <upstream, output>. For the shared part the returned
// input_grad is the boundary gradient shipped over the G-interface.
inline BackwardResult backward(const ModelSpec& spec, const ParamVector& params,
                               const ForwardCache& cache, const Vec& upstream, Part part,
                               FlopCounter* fc = nullptr, int64_t expected_tag = -1) {
    auto [lo, hi] = spec.layer_range(part);
    if (cache.first_layer != lo || cache.last_layer != hi)
        throw ContractViolation("backward: cache does not match requested part");
    if (expected_tag >= 0 && cache.tag != expected_tag)
        throw ContractViolation("backward: stale cache (round mismatch)");
    if (lo < hi && static_cast<int>(upstream.size()) != spec.layers[hi - 1].out_dim)
        throw std::invalid_argument("backward: upstream dimension mismatch");

    const long long base = spec.layer_offset(lo);
    BackwardResult res;
    res.param_grads.assign(static_cast<size_t>(spec.layer_offset(hi) - base), 0.0);
    Vec g = upstream;
    for (int k = hi - 1; k >= lo; --k) {
        const auto& l = spec.layers[k];
        const Vec& a_in = cache.inputs[static_cast<size_t>(k - lo)];
        if (l.kind == LayerSpec::Kind::activation) {
            switch (l.act) {
                case Activation::identity: break;
                case Activation::tanh_act:
                    for (int i = 0; i < l.in_dim; ++i) {
                        double t = std::tanh(a_in[i]);
                        g[i] *= 1.0 - t * t;
                    }
                    break;
                case Activation::relu:
                    for (int i = 0; i < l.in_dim; ++i)
                        if (!(a_in[i] > 0.0)) g[i] = 0.0;
                    break;
            }
            continue;
        }
        double* dw = res.param_grads.data() + (spec.layer_offset(k) - base);
        double* db = dw + static_cast<long long>(l.in_dim) * l.out_dim;
        const double* w = params.values.data() + spec.layer_offset(k);
        Vec gin(static_cast<size_t>(l.in_dim), 0.0);
        for (int o = 0; o < l.out_dim; ++o) {
            const double go = g[o];
            double* dwrow = dw + static_cast<long long>(o) * l.in_dim;
            const double* wrow = w + static_cast<long long>(o) * l.in_dim;
            for (int i = 0; i < l.in_dim; ++i) {
                dwrow[i] = go * a_in[i];
                gin[i] += wrow[i] * go;
            }
            db[o] = go;
        }
        if (fc) fc->flops += 4LL * l.in_dim * l.out_dim;
        g = std::move(gin);
    }
    res.input_grad = std::move(g);
    return res;
}

inline std::pair<double, Vec> mse_loss_and_grad(const Vec& pred, const Vec& label) {
    if (pred.size() != label.size())
        throw std::invalid_argument("mse_loss_and_grad: dimension mismatch");
    const double n = static_cast<double>(pred.size());
    double loss = 0.0;
    Vec grad(pred.size());
    for (size_t i = 0; i < pred.size(); ++i) {
        double d = pred[i] - label[i];
        loss += d * d;
        grad[i] = 2.0 * d / n;
    }
    return {loss / n, std::move(grad)};
}

// Scheme boundary in layer units. share_top keeps the blocks up to and
// including the embedding block; share_deep additionally keeps the first
// half (rounded down) of the remaining blocks.
inline int scheme_boundary(const ModelSpec& spec, Scheme scheme) {
    auto blk = spec.blocks();
    if (scheme == Scheme::none) return static_cast<int>(spec.layers.size());
    if (spec.embedding_block < 0 || spec.embedding_block >= static_cast<int>(blk.size()))
        throw std::invalid_argument("scheme_boundary: embedding block out of range");
    int rest = static_cast<int>(blk.size()) - spec.embedding_block - 1;
    if (scheme == Scheme::share_top) {
        if (rest < 1) throw std::invalid_argument("share_top: no layers left to share");
        return blk[static_cast<size_t>(spec.embedding_block)].second;
    }
    if (rest < 2) throw std::invalid_argument("share_deep: not enough layers to split");
    return blk[static_cast<size_t>(spec.embedding_block + rest / 2)].second;
}

inline std::pair<ModelSpec, ModelSpec> split_model(const ModelSpec& spec, Scheme scheme) {
    spec.validate();
    int b = scheme_boundary(spec, scheme);
    ModelSpec agent, shared;
    agent.layers.assign(spec.layers.begin(), spec.layers.begin() + b);
    agent.boundary = b;
    agent.embedding_block = spec.embedding_block;
    shared.layers.assign(spec.layers.begin() + b, spec.layers.end());
    shared.boundary = 0;
    return {agent, shared};
}

// Exact multiply-accumulate count (2 flops per MAC); activation layers and
// bias additions are free.
inline long long flops(const ModelSpec& spec, Part part, Phase phase) {
    auto [lo, hi] = spec.layer_range(part);
    long long f = 0;
    for (int k = lo; k < hi; ++k) {
        const auto& l = spec.layers[k];
        if (l.kind != LayerSpec::Kind::dense) continue;
        long long macs = 2LL * l.in_dim * l.out_dim;
        f += phase == Phase::backward ? 2 * macs : macs;
    }
    return f;
}

// Desk-scale default: 15-step observation window in, 5-step prediction out,
// embedding width 16 at the second dense block.
inline ModelSpec default_model_spec(int input_dim = 15, int output_dim = 5) {
    ModelSpec spec;
    spec.layers = {
        LayerSpec::dense(input_dim, 32),
        LayerSpec::activation(Activation::tanh_act, 32),
        LayerSpec::dense(32, 16),
        LayerSpec::dense(16, 32),
        LayerSpec::activation(Activation::tanh_act, 32),
        LayerSpec::dense(32, output_dim),
    };
    spec.embedding_block = 1;
    spec.boundary = static_cast<int>(spec.layers.size());
    spec.validate();
    return spec;
}

}  // namespace mops
