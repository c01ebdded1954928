#pragma once

#include <string>
#include <vector>

#include "bnas/errors.hpp"
#include "bnas/tensor.hpp"

namespace bnas {

enum class LayerKind {
    input,
    conv2d,
    depthwise_conv2d,
    batchnorm,
    activation,
    squeeze_excite,
    global_avg_pool,
    fully_connected,
    elementwise_add,
    mse_loss,
    softmax_cross_entropy,
};

enum class Act { relu, sigmoid, swish };

enum class RunMode { train, eval };

inline bool needs_params(LayerKind k) {
    switch (k) {
        case LayerKind::conv2d:
        case LayerKind::depthwise_conv2d:
        case LayerKind::batchnorm:
        case LayerKind::squeeze_excite:
        case LayerKind::fully_connected:
            return true;
        default:
            return false;
    }
}

inline const char* kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::input: return "input";
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::depthwise_conv2d: return "depthwise-conv2d";
        case LayerKind::batchnorm: return "batchnorm";
        case LayerKind::activation: return "activation";
        case LayerKind::squeeze_excite: return "squeeze-excite";
        case LayerKind::global_avg_pool: return "global-avg-pool";
        case LayerKind::fully_connected: return "fully-connected";
        case LayerKind::elementwise_add: return "elementwise-add";
        case LayerKind::mse_loss: return "mse-loss";
        case LayerKind::softmax_cross_entropy: return "softmax-cross-entropy";
    }
    return "?";
}

// One layer. Which attributes matter depends on kind:
//   conv2d:            in_channels, out_channels, kernel, stride, padding, bias
//   depthwise_conv2d:  in_channels (== out), kernel, stride, padding
//   batchnorm:         in_channels, bn_momentum, bn_eps
//   activation:        act
//   squeeze_excite:    in_channels (tensor width), se_reduced (bottleneck width)
//   fully_connected:   in_channels (features), out_channels, bias
struct LayerSpec {
    LayerKind kind = LayerKind::input;
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 1;
    int stride = 1;
    int padding = 0;
    bool bias = false;
    Act act = Act::relu;
    int se_reduced = 0;
    double bn_momentum = 0.9;
    double bn_eps = 1e-5;
};

inline LayerSpec conv2d_spec(int in_ch, int out_ch, int k, int stride = 1, int pad = -1, bool bias = false) {
    LayerSpec s;
    s.kind = LayerKind::conv2d;
    s.in_channels = in_ch;
    s.out_channels = out_ch;
    s.kernel = k;
    s.stride = stride;
    s.padding = pad < 0 ? k / 2 : pad;
    s.bias = bias;
    return s;
}

inline LayerSpec depthwise_spec(int ch, int k, int stride = 1, int pad = -1) {
    LayerSpec s;
    s.kind = LayerKind::depthwise_conv2d;
    s.in_channels = ch;
    s.out_channels = ch;
    s.kernel = k;
    s.stride = stride;
    s.padding = pad < 0 ? k / 2 : pad;
    return s;
}

inline LayerSpec batchnorm_spec(int ch) {
    LayerSpec s;
    s.kind = LayerKind::batchnorm;
    s.in_channels = ch;
    s.out_channels = ch;
    return s;
}

inline LayerSpec activation_spec(Act a) {
    LayerSpec s;
    s.kind = LayerKind::activation;
    s.act = a;
    return s;
}

inline LayerSpec squeeze_excite_spec(int ch, int reduced) {
    LayerSpec s;
    s.kind = LayerKind::squeeze_excite;
    s.in_channels = ch;
    s.out_channels = ch;
    s.se_reduced = reduced;
    return s;
}

inline LayerSpec global_avg_pool_spec() {
    LayerSpec s;
    s.kind = LayerKind::global_avg_pool;
    return s;
}

inline LayerSpec fully_connected_spec(int in_f, int out_f, bool bias = true) {
    LayerSpec s;
    s.kind = LayerKind::fully_connected;
    s.in_channels = in_f;
    s.out_channels = out_f;
    s.bias = bias;
    return s;
}

inline LayerSpec add_spec() {
    LayerSpec s;
    s.kind = LayerKind::elementwise_add;
    return s;
}

inline LayerSpec mse_loss_spec() {
    LayerSpec s;
    s.kind = LayerKind::mse_loss;
    return s;
}

inline LayerSpec softmax_ce_spec() {
    LayerSpec s;
    s.kind = LayerKind::softmax_cross_entropy;
    return s;
}

inline int64_t conv_out_dim(int64_t in, int kernel, int stride, int padding) {
    return (in + 2 * padding - kernel) / stride + 1;
}

// Output shape as a pure function of input shapes and attributes. Throws
// ShapeError on any mismatch; execution never sees an invalid graph.
inline Shape infer_shape(const LayerSpec& s, const std::vector<Shape>& in) {
    auto want_inputs = [&](size_t n) {
        if (in.size() != n)
            throw ShapeError(std::string(kind_name(s.kind)) + ": expected " + std::to_string(n) +
                             " inputs, got " + std::to_string(in.size()));
    };
    auto want_rank = [&](const Shape& sh, size_t r) {
        if (sh.size() != r)
            throw ShapeError(std::string(kind_name(s.kind)) + ": expected rank-" + std::to_string(r) +
                             " input, got " + shape_str(sh));
    };
    switch (s.kind) {
        case LayerKind::input:
            throw ShapeError("input node has no inferable shape");
        case LayerKind::conv2d: {
            want_inputs(1);
            want_rank(in[0], 4);
            if (in[0][1] != s.in_channels)
                throw ShapeError("conv2d: input has " + std::to_string(in[0][1]) + " channels, spec wants " +
                                 std::to_string(s.in_channels));
            const int64_t oh = conv_out_dim(in[0][2], s.kernel, s.stride, s.padding);
            const int64_t ow = conv_out_dim(in[0][3], s.kernel, s.stride, s.padding);
            if (oh <= 0 || ow <= 0) throw ShapeError("conv2d: kernel larger than padded input " + shape_str(in[0]));
            return {in[0][0], s.out_channels, oh, ow};
        }
        case LayerKind::depthwise_conv2d: {
            want_inputs(1);
            want_rank(in[0], 4);
            if (in[0][1] != s.in_channels)
                throw ShapeError("depthwise-conv2d: input has " + std::to_string(in[0][1]) +
                                 " channels, spec wants " + std::to_string(s.in_channels));
            const int64_t oh = conv_out_dim(in[0][2], s.kernel, s.stride, s.padding);
            const int64_t ow = conv_out_dim(in[0][3], s.kernel, s.stride, s.padding);
            if (oh <= 0 || ow <= 0) throw ShapeError("depthwise-conv2d: kernel larger than padded input");
            return {in[0][0], s.in_channels, oh, ow};
        }
        case LayerKind::batchnorm: {
            want_inputs(1);
            want_rank(in[0], 4);
            if (in[0][1] != s.in_channels)
                throw ShapeError("batchnorm: channel mismatch " + shape_str(in[0]) + " vs " +
                                 std::to_string(s.in_channels));
            return in[0];
        }
        case LayerKind::activation: {
            want_inputs(1);
            return in[0];
        }
        case LayerKind::squeeze_excite: {
            want_inputs(1);
            want_rank(in[0], 4);
            if (in[0][1] != s.in_channels)
                throw ShapeError("squeeze-excite: channel mismatch " + shape_str(in[0]) + " vs " +
                                 std::to_string(s.in_channels));
            if (s.se_reduced < 1) throw ShapeError("squeeze-excite: reduced width must be >= 1");
            return in[0];
        }
        case LayerKind::global_avg_pool: {
            want_inputs(1);
            want_rank(in[0], 4);
            return {in[0][0], in[0][1]};
        }
        case LayerKind::fully_connected: {
            want_inputs(1);
            want_rank(in[0], 2);
            if (in[0][1] != s.in_channels)
                throw ShapeError("fully-connected: input has " + std::to_string(in[0][1]) +
                                 " features, spec wants " + std::to_string(s.in_channels));
            return {in[0][0], s.out_channels};
        }
        case LayerKind::elementwise_add: {
            want_inputs(2);
            if (in[0] != in[1])
                throw ShapeError("elementwise-add: shape mismatch " + shape_str(in[0]) + " vs " + shape_str(in[1]));
            return in[0];
        }
        case LayerKind::mse_loss: {
            want_inputs(2);
            if (in[0] != in[1])
                throw ShapeError("mse-loss: shape mismatch " + shape_str(in[0]) + " vs " + shape_str(in[1]));
            return {1};
        }
        case LayerKind::softmax_cross_entropy: {
            want_inputs(2);
            want_rank(in[0], 2);
            if (in[1].size() != 1 || in[1][0] != in[0][0])
                throw ShapeError("softmax-cross-entropy: labels must be [N] matching logits " + shape_str(in[0]));
            return {1};
        }
    }
    throw ShapeError("unknown layer kind");
}

}  // namespace bnas
