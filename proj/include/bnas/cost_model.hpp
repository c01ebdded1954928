#pragma once

#include <cstdint>
#include <map>
#include <tuple>
#include <vector>

#include "bnas/model_builder.hpp"
#include "bnas/search_space.hpp"

// Stand-alone complexity accounting. Counts are exact integers; "madds"
// are multiply-accumulates (one MAC per kernel tap), with activations,
// pooling and the squeeze-excite gating counted and normalization folded.
namespace bnas {

struct Cost {
    int64_t params = 0;
    int64_t madds = 0;
    Cost& operator+=(const Cost& o) {
        params += o.params;
        madds += o.madds;
        return *this;
    }
    friend Cost operator+(Cost a, const Cost& b) { return a += b; }
    friend bool operator==(const Cost& a, const Cost& b) = default;
};

// Closed-form cost of one inverted-bottleneck op. `spatial` is the input
// feature height (= width); stride shrinks it for every stage after the
// depthwise conv.
inline Cost op_cost(const OpSpec& op, int in_width, int out_width, int64_t spatial, int stride) {
    if (in_width < 1 || out_width < 1 || spatial < 1 || stride < 1)
        throw ConfigError("op_cost: dimensions must be positive");
    const int64_t hidden = int64_t(op.expansion) * in_width;
    const int64_t reduced = se_reduced_width(op.se_ratio, in_width);
    const int64_t s_in = spatial;
    const int64_t s_out = conv_out_dim(spatial, op.kernel, stride, op.kernel / 2);
    const int64_t in_elems = s_in * s_in;
    const int64_t out_elems = s_out * s_out;
    const int64_t k2 = int64_t(op.kernel) * op.kernel;

    Cost c;
    c.params += in_width * hidden;       // expand 1x1
    c.params += 2 * hidden;              // expand norm affine
    c.params += k2 * hidden;             // depthwise
    c.params += 2 * hidden;              // depthwise norm affine
    c.params += 2 * hidden * reduced;    // squeeze-excite, no biases
    c.params += hidden * out_width;      // project 1x1
    c.params += 2 * out_width;           // project norm affine

    c.madds += in_elems * hidden * in_width;   // expand conv
    c.madds += in_elems * hidden;              // expand activation
    c.madds += out_elems * hidden * k2;        // depthwise conv
    c.madds += out_elems * hidden;             // depthwise activation
    // squeeze-excite: pool, two matmuls, swish, sigmoid, channel rescale
    c.madds += out_elems * hidden;             // global pool reads
    c.madds += hidden * reduced;               // first matmul
    c.madds += reduced;                        // swish
    c.madds += reduced * hidden;               // second matmul
    c.madds += hidden;                         // sigmoid
    c.madds += out_elems * hidden;             // rescale
    c.madds += out_elems * out_width * hidden; // project conv
    if (stride == 1 && in_width == out_width) c.madds += out_elems * out_width;  // residual add
    return c;
}

inline Cost stem_cost(const SupernetConfig& cfg) {
    const int64_t s = cfg.input_size;
    const int64_t w = cfg.stem_width;
    Cost c;
    c.params = 9 * cfg.input_channels * w + 2 * w;
    c.madds = s * s * w * 9 * cfg.input_channels + s * s * w;  // conv + activation
    return c;
}

inline Cost head_cost(const SupernetConfig& cfg, int in_width, int64_t spatial) {
    Cost c;
    c.params = int64_t(in_width) * cfg.num_classes + cfg.num_classes;
    c.madds = spatial * spatial * in_width                     // global pool
              + int64_t(in_width) * cfg.num_classes + cfg.num_classes;  // fc + bias add
    return c;
}

struct CostTable {
    // key: block, cell, layer, op
    std::map<std::tuple<int, int, int, int>, Cost> entries;
    Cost stem, head;

    const Cost& at(int b, int c, int l, int o) const {
        auto it = entries.find({b, c, l, o});
        if (it == entries.end())
            throw ConfigError("cost table has no entry for block " + std::to_string(b + 1) + " cell " +
                              std::to_string(c) + " layer " + std::to_string(l) + " op " + std::to_string(o));
        return it->second;
    }
};

// Table over stand-alone geometry. Requires every cell within a block to
// share one width, otherwise a layer's input width would depend on the
// previous block's chosen cell and the table could not be arch-independent.
inline CostTable build_cost_table(const SupernetConfig& cfg) {
    validate_config(cfg);
    for (const BlockSpec& b : cfg.blocks)
        for (const CellSpec& c : b.cells)
            if (c.width != b.cells[0].width)
                throw ConfigError("cost table needs one width per block; a block mixes cell widths");

    CostTable t;
    t.stem = stem_cost(cfg);
    int64_t spatial = cfg.input_size;
    int prev_w = cfg.stem_width;
    for (size_t b = 0; b < cfg.blocks.size(); ++b) {
        const BlockSpec& blk = cfg.blocks[b];
        for (size_t c = 0; c < blk.cells.size(); ++c) {
            const CellSpec& cs = blk.cells[c];
            int64_t sp = spatial;
            for (int l = 0; l < cs.depth; ++l) {
                const LayerDims dims = standalone_layer_dims(prev_w, cs, blk.stride, l);
                for (size_t o = 0; o < cfg.ops.size(); ++o)
                    t.entries[{int(b), int(c), l, int(o)}] =
                        op_cost(cfg.ops[o], dims.in_ch, dims.out_ch, sp, dims.stride);
                sp = conv_out_dim(sp, 3, dims.stride, 1);
            }
        }
        spatial = conv_out_dim(spatial, 3, blk.stride, 1);
        prev_w = blk.cells[0].width;
    }
    t.head = head_cost(cfg, prev_w, spatial);
    return t;
}

inline Cost model_cost(const CostTable& t, const ArchEncoding& arch) {
    Cost c = t.stem + t.head;
    for (size_t b = 0; b < arch.size(); ++b)
        for (size_t l = 0; l < arch[b].ops.size(); ++l)
            c += t.at(int(b), arch[b].cell, int(l), arch[b].ops[l]);
    return c;
}

// Independent counting route: walks an assembled graph and derives both
// numbers from actual inferred shapes. params = trainable element count;
// madds recomputed per node kind. Used to cross-check the closed forms.
inline Cost graph_cost(const Graph& g, const std::vector<Shape>& input_shapes) {
    const std::vector<Shape> shapes = g.infer_shapes(input_shapes);
    ParameterSet<float> ps;
    init_params(g, ps, Rng(1));
    Cost c;
    c.params = ps.trainable_count();
    for (int i = 0; i < g.size(); ++i) {
        const Node& n = g.node(i);
        const LayerSpec& s = n.spec;
        const Shape& out = shapes[size_t(i)];
        const int64_t out_elems = shape_numel(out) / (out.empty() ? 1 : out[0]);  // per sample
        switch (s.kind) {
            case LayerKind::conv2d:
                c.madds += out_elems * int64_t(s.kernel) * s.kernel * s.in_channels;
                if (s.bias) c.madds += out_elems;
                break;
            case LayerKind::depthwise_conv2d:
                c.madds += out_elems * int64_t(s.kernel) * s.kernel;
                break;
            case LayerKind::activation:
                c.madds += out_elems;
                break;
            case LayerKind::squeeze_excite: {
                const Shape& in = shapes[size_t(n.inputs[0])];
                const int64_t hw = in[2] * in[3];
                const int64_t C = s.in_channels, R = s.se_reduced;
                c.madds += hw * C + C * R + R + R * C + C + hw * C;
                break;
            }
            case LayerKind::global_avg_pool: {
                const Shape& in = shapes[size_t(n.inputs[0])];
                c.madds += in[1] * in[2] * in[3];
                break;
            }
            case LayerKind::fully_connected:
                c.madds += int64_t(s.in_channels) * s.out_channels;
                if (s.bias) c.madds += s.out_channels;
                break;
            case LayerKind::elementwise_add:
                c.madds += out_elems;
                break;
            default:
                break;  // input, batchnorm (folded), losses
        }
    }
    return c;
}

}  // namespace bnas
