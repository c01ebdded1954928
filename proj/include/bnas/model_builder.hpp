#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "bnas/graph.hpp"
#include "bnas/search_space.hpp"

// Graph assembly for every model family: inverted-bottleneck ops, supernet
// cells (which project to the teacher width so feature mimicry type-checks),
// stand-alone classifiers at the cell's own width, the desk teacher, and the
// end-to-end single-path baseline.
namespace bnas {

inline int se_reduced_width(double se_ratio, int op_in_width) {
    return std::max(1, int(std::ceil(se_ratio * double(op_in_width))));
}

struct LayerDims {
    int in_ch = 0, out_ch = 0, stride = 1;
};

// Geometry of layer `l` of a supernet cell: the first layer carries the
// block stride and consumes the teacher in-width; the last layer projects
// to the teacher out-width; middle layers run at the cell's own width.
inline LayerDims supernet_layer_dims(const BlockSpec& blk, const CellSpec& cell, int layer) {
    LayerDims d;
    d.in_ch = layer == 0 ? blk.teacher_in_width : cell.width;
    d.out_ch = layer == cell.depth - 1 ? blk.teacher_out_width : cell.width;
    d.stride = layer == 0 ? blk.stride : 1;
    return d;
}

// Stand-alone geometry: the cell runs at its own width throughout.
inline LayerDims standalone_layer_dims(int prev_width, const CellSpec& cell, int block_stride, int layer) {
    LayerDims d;
    d.in_ch = layer == 0 ? prev_width : cell.width;
    d.out_ch = cell.width;
    d.stride = layer == 0 ? block_stride : 1;
    return d;
}

// Appends one inverted-bottleneck op. Residual add only when the op keeps
// both the spatial size and the channel count.
inline int append_mbconv(Graph& g, const std::string& prefix, const LayerDims& dims, const OpSpec& op,
                         int in_node) {
    const int hidden = op.expansion * dims.in_ch;
    const int reduced = se_reduced_width(op.se_ratio, dims.in_ch);
    int x = g.add(prefix + ".expand", conv2d_spec(dims.in_ch, hidden, 1), {in_node});
    x = g.add(prefix + ".ebn", batchnorm_spec(hidden), {x});
    x = g.add(prefix + ".eact", activation_spec(Act::swish), {x});
    x = g.add(prefix + ".dw", depthwise_spec(hidden, op.kernel, dims.stride), {x});
    x = g.add(prefix + ".dbn", batchnorm_spec(hidden), {x});
    x = g.add(prefix + ".dact", activation_spec(Act::swish), {x});
    x = g.add(prefix + ".se", squeeze_excite_spec(hidden, reduced), {x});
    x = g.add(prefix + ".project", conv2d_spec(hidden, dims.out_ch, 1), {x});
    x = g.add(prefix + ".pbn", batchnorm_spec(dims.out_ch), {x});
    if (dims.stride == 1 && dims.in_ch == dims.out_ch) x = g.add(prefix + ".add", add_spec(), {in_node, x});
    return x;
}

inline int append_stem(Graph& g, const std::string& prefix, int in_ch, int out_ch, int in_node) {
    int x = g.add(prefix + ".conv", conv2d_spec(in_ch, out_ch, 3, 1), {in_node});
    x = g.add(prefix + ".bn", batchnorm_spec(out_ch), {x});
    return g.add(prefix + ".act", activation_spec(Act::swish), {x});
}

// Shared parameter namespace for supernet cells: b<block>.c<cell>.l<layer>.o<op>
inline std::string op_prefix(size_t block, size_t cell, int layer, int op) {
    return "b" + std::to_string(block) + ".c" + std::to_string(cell) + ".l" + std::to_string(layer) + ".o" +
           std::to_string(op);
}

// A single candidate op at one cell layer, as its own runnable graph.
// Parameter names match the full path graphs, so one ParameterSet backs all
// of them; this is what the feature-sharing evaluator executes node by node.
inline Graph build_op_graph(const SupernetConfig& cfg, size_t block, size_t cell, int layer, int op) {
    const BlockSpec& blk = cfg.blocks.at(block);
    const CellSpec& cs = blk.cells.at(cell);
    const LayerDims dims = supernet_layer_dims(blk, cs, layer);
    Graph g;
    int x = g.add_input("x", {1, dims.in_ch, 1, 1});
    append_mbconv(g, op_prefix(block, cell, layer, op), dims, cfg.ops.at(size_t(op)), x);
    return g;
}

// One sampled path through a cell; optionally with the mimicry loss head
// (inputs: teacher previous feature, teacher target feature).
inline Graph build_cell_path_graph(const SupernetConfig& cfg, size_t block, size_t cell,
                                   const std::vector<int>& path, bool with_loss) {
    const BlockSpec& blk = cfg.blocks.at(block);
    const CellSpec& cs = blk.cells.at(cell);
    if (int(path.size()) != cs.depth) throw ConfigError("path length does not match cell depth");
    Graph g;
    int x = g.add_input("x", {1, blk.teacher_in_width, 1, 1});
    for (int l = 0; l < cs.depth; ++l)
        x = append_mbconv(g, op_prefix(block, cell, l, path[size_t(l)]), supernet_layer_dims(blk, cs, l),
                          cfg.ops.at(size_t(path[size_t(l)])), x);
    if (with_loss) {
        int y = g.add_input("target", {1, blk.teacher_out_width, 1, 1});
        g.add("loss", mse_loss_spec(), {x, y});
    }
    return g;
}

// Stand-alone classifier for a searched encoding: stem, chosen cells at
// their own widths, pooled linear head.
inline Graph build_standalone(const SupernetConfig& cfg, const ArchEncoding& arch, bool with_loss) {
    validate_encoding(cfg, arch);
    Graph g;
    int x = g.add_input("image", {1, cfg.input_channels, cfg.input_size, cfg.input_size});
    x = append_stem(g, "stem", cfg.input_channels, cfg.stem_width, x);
    int prev_w = cfg.stem_width;
    for (size_t b = 0; b < cfg.blocks.size(); ++b) {
        const BlockSpec& blk = cfg.blocks[b];
        const CellSpec& cs = blk.cells.at(size_t(arch[b].cell));
        for (int l = 0; l < cs.depth; ++l) {
            const std::string prefix = "b" + std::to_string(b) + ".l" + std::to_string(l);
            x = append_mbconv(g, prefix, standalone_layer_dims(prev_w, cs, blk.stride, l),
                              cfg.ops.at(size_t(arch[b].ops[size_t(l)])), x);
        }
        prev_w = cs.width;
    }
    x = g.add("pool", global_avg_pool_spec(), {x});
    x = g.add("head.fc", fully_connected_spec(prev_w, cfg.num_classes, true), {x});
    if (with_loss) {
        int y = g.add_input("labels", {1});
        g.add("loss", softmax_ce_spec(), {x, y});
    }
    return g;
}

// Desk teacher: fixed inverted-bottleneck stack, three layers per block at
// the teacher widths, kernel 3 and expansion 6 everywhere.
inline constexpr int teacher_layers_per_block = 3;
inline constexpr OpSpec teacher_op{3, 6, 0.25};

struct TeacherLayout {
    Graph graph;                  // stem .. blocks .. head (logits), plus loss head if requested
    int stem_node = -1;           // prelude output node
    std::vector<int> boundaries;  // node index of each block's output
};

inline int append_teacher_block(Graph& g, const SupernetConfig& cfg, size_t block, int in_node) {
    const BlockSpec& blk = cfg.blocks.at(block);
    int x = in_node;
    for (int l = 0; l < teacher_layers_per_block; ++l) {
        LayerDims dims;
        dims.in_ch = l == 0 ? blk.teacher_in_width : blk.teacher_out_width;
        dims.out_ch = blk.teacher_out_width;
        dims.stride = l == 0 ? blk.stride : 1;
        x = append_mbconv(g, "t" + std::to_string(block) + ".l" + std::to_string(l), dims, teacher_op, x);
    }
    return x;
}

inline TeacherLayout build_teacher(const SupernetConfig& cfg, bool with_loss) {
    TeacherLayout t;
    Graph& g = t.graph;
    int x = g.add_input("image", {1, cfg.input_channels, cfg.input_size, cfg.input_size});
    x = append_stem(g, "stem", cfg.input_channels, cfg.stem_width, x);
    t.stem_node = x;
    for (size_t b = 0; b < cfg.blocks.size(); ++b) {
        x = append_teacher_block(g, cfg, b, x);
        t.boundaries.push_back(x);
    }
    x = g.add("pool", global_avg_pool_spec(), {x});
    x = g.add("head.fc", fully_connected_spec(cfg.blocks.back().teacher_out_width, cfg.num_classes, true), {x});
    if (with_loss) {
        int y = g.add_input("labels", {1});
        g.add("loss", softmax_ce_spec(), {x, y});
    }
    return t;
}

// Teacher block i alone, input = previous block's feature map. Parameter
// names match build_teacher, so the teacher checkpoint drives it directly.
inline Graph build_teacher_block_graph(const SupernetConfig& cfg, size_t block) {
    Graph g;
    int x = g.add_input("x", {1, cfg.blocks.at(block).teacher_in_width, 1, 1});
    append_teacher_block(g, cfg, block, x);
    return g;
}

// End-to-end single-path classifier over the supernet geometry (cells still
// project to teacher widths so blocks chain). One weight namespace serves
// every sampled path; stem and head are shared by all paths.
inline Graph build_shared_path_graph(const SupernetConfig& cfg, const ArchEncoding& arch, bool with_loss) {
    validate_encoding(cfg, arch);
    Graph g;
    int x = g.add_input("image", {1, cfg.input_channels, cfg.input_size, cfg.input_size});
    x = append_stem(g, "shared.stem", cfg.input_channels, cfg.stem_width, x);
    for (size_t b = 0; b < cfg.blocks.size(); ++b) {
        const BlockSpec& blk = cfg.blocks[b];
        const CellSpec& cs = blk.cells.at(size_t(arch[b].cell));
        for (int l = 0; l < cs.depth; ++l)
            x = append_mbconv(g, op_prefix(b, size_t(arch[b].cell), l, arch[b].ops[size_t(l)]),
                              supernet_layer_dims(blk, cs, l), cfg.ops.at(size_t(arch[b].ops[size_t(l)])), x);
    }
    x = g.add("pool", global_avg_pool_spec(), {x});
    x = g.add("shared.head.fc", fully_connected_spec(cfg.blocks.back().teacher_out_width, cfg.num_classes, true),
              {x});
    if (with_loss) {
        int y = g.add_input("labels", {1});
        g.add("loss", softmax_ce_spec(), {x, y});
    }
    return g;
}

// Registers parameters for every (cell, layer, op) of one block, so a block
// checkpoint always carries the full candidate set whether sampled or not.
// Weights are drawn in a fixed nested order keyed only by (seed, block).
template <typename T>
void init_block_params(const SupernetConfig& cfg, size_t block, ParameterSet<T>& ps, uint64_t seed) {
    const BlockSpec& blk = cfg.blocks.at(block);
    for (size_t c = 0; c < blk.cells.size(); ++c)
        for (int l = 0; l < blk.cells[c].depth; ++l)
            for (size_t o = 0; o < cfg.ops.size(); ++o) {
                Graph g = build_op_graph(cfg, block, c, l, int(o));
                init_params(g, ps, Rng::derive(seed, "block-init", uint64_t(block),
                                               (c << 16) | (uint64_t(l) << 8) | o));
            }
}

}  // namespace bnas
