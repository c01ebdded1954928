#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "bnas/errors.hpp"
#include "bnas/layers.hpp"

// Search-space structure and the pure accounting over it: path enumeration,
// exact space size, per-block drop rate, encoding validation. Everything
// here is integer math on immutable configs; graph assembly lives in
// model_builder.hpp.
namespace bnas {

using BigInt = boost::multiprecision::cpp_int;
using BigRat = boost::multiprecision::cpp_rational;

// Inverted-bottleneck candidate: 1x1 expand, kxk depthwise, squeeze-excite,
// 1x1 project, each conv followed by norm (and activation on the first two).
struct OpSpec {
    int kernel = 3;
    int expansion = 6;
    double se_ratio = 0.25;
};

struct CellSpec {
    int depth = 1;  // layer count d
    int width = 16; // internal channel count
};

struct BlockSpec {
    std::vector<CellSpec> cells;
    int teacher_in_width = 0;
    int teacher_out_width = 0;
    int stride = 1;  // applied by the first layer of every cell variant
};

struct SupernetConfig {
    std::vector<BlockSpec> blocks;
    std::vector<OpSpec> ops;
    int input_size = 32;
    int input_channels = 3;
    int stem_width = 8;   // teacher prelude output width
    int num_classes = 10;
    uint64_t seed = 1;
    std::string dataset = "synthetic";
    std::vector<double> lambda;  // per-block loss weights; empty = all 1
};

// One stand-alone model: per block, a cell variant plus an op per layer.
struct ArchChoice {
    int cell = 0;
    std::vector<int> ops;
};
using ArchEncoding = std::vector<ArchChoice>;

inline double block_lambda(const SupernetConfig& cfg, size_t block) {
    if (cfg.lambda.empty()) return 1.0;
    if (block >= cfg.lambda.size()) throw ConfigError("lambda list shorter than block list");
    return cfg.lambda[block];
}

inline void validate_config(const SupernetConfig& cfg) {
    if (cfg.blocks.empty()) throw ConfigError("config needs at least one block");
    if (cfg.ops.size() < 2) throw ConfigError("config needs at least two candidate operations");
    if (!cfg.lambda.empty() && cfg.lambda.size() != cfg.blocks.size())
        throw ConfigError("lambda list must match block count");
    int64_t hw = cfg.input_size;
    int prev_w = cfg.stem_width;
    for (size_t b = 0; b < cfg.blocks.size(); ++b) {
        const BlockSpec& blk = cfg.blocks[b];
        const std::string tag = "block " + std::to_string(b + 1);
        if (blk.cells.empty()) throw ConfigError(tag + " has no cells");
        if (blk.teacher_in_width != prev_w)
            throw ConfigError(tag + " teacher in-width " + std::to_string(blk.teacher_in_width) +
                              " does not chain from previous width " + std::to_string(prev_w));
        if (blk.teacher_out_width < 1) throw ConfigError(tag + " teacher out-width must be positive");
        if (blk.stride < 1) throw ConfigError(tag + " stride must be positive");
        for (const CellSpec& c : blk.cells) {
            if (c.depth < 1) throw ConfigError(tag + " has a cell with depth < 1");
            if (c.width < 1) throw ConfigError(tag + " has a cell with width < 1");
        }
        hw = conv_out_dim(hw, 3, blk.stride, 1);
        if (hw < 1) throw ConfigError(tag + " stride collapses the spatial size");
        prev_w = blk.teacher_out_width;
    }
    for (const OpSpec& op : cfg.ops) {
        if (op.kernel != 3 && op.kernel != 5 && op.kernel != 7)
            throw ConfigError("op kernel must be one of 3, 5, 7");
        if (op.expansion != 3 && op.expansion != 6) throw ConfigError("op expansion must be 3 or 6");
        if (!(op.se_ratio > 0.0 && op.se_ratio <= 1.0)) throw ConfigError("op se_ratio must be in (0, 1]");
    }
}

// Spatial size of each block's output feature map, stem included at index 0.
inline std::vector<int64_t> block_out_sizes(const SupernetConfig& cfg) {
    std::vector<int64_t> out;
    int64_t hw = cfg.input_size;
    out.push_back(hw);  // prelude keeps stride 1
    for (const BlockSpec& b : cfg.blocks) {
        hw = conv_out_dim(hw, 3, b.stride, 1);
        out.push_back(hw);
    }
    return out;
}

// All C^d op-index sequences for one cell, lexicographic.
inline std::vector<std::vector<int>> enumerate_paths(const CellSpec& cell, int num_ops) {
    double approx = 1.0;
    for (int i = 0; i < cell.depth; ++i) approx *= double(num_ops);
    if (approx > 1e7) throw OverflowError("path enumeration would exceed 10^7 sequences");
    std::vector<std::vector<int>> out;
    out.reserve(size_t(approx));
    std::vector<int> cur(size_t(cell.depth), 0);
    while (true) {
        out.push_back(cur);
        int i = cell.depth - 1;
        while (i >= 0 && cur[size_t(i)] == num_ops - 1) cur[size_t(i--)] = 0;
        if (i < 0) break;
        cur[size_t(i)] += 1;
    }
    return out;
}

inline BigInt block_space_size(const BlockSpec& blk, int num_ops) {
    BigInt sum = 0;
    for (const CellSpec& c : blk.cells) {
        BigInt p = 1;
        for (int i = 0; i < c.depth; ++i) p *= num_ops;
        sum += p;
    }
    return sum;
}

// Exact model count: product over blocks of (sum over cells of C^depth).
inline BigInt space_size(const SupernetConfig& cfg) {
    validate_config(cfg);
    BigInt total = 1;
    for (const BlockSpec& b : cfg.blocks) total *= block_space_size(b, int(cfg.ops.size()));
    return total;
}

// Fraction of the space that keeps a fixed choice everywhere except the
// given block: per-block size over the whole-space size, exact.
inline BigRat drop_rate(const SupernetConfig& cfg, size_t block_index) {
    if (block_index >= cfg.blocks.size()) throw ConfigError("drop_rate: block index out of range");
    return BigRat(block_space_size(cfg.blocks[block_index], int(cfg.ops.size())), space_size(cfg));
}

inline void validate_encoding(const SupernetConfig& cfg, const ArchEncoding& arch) {
    if (arch.size() != cfg.blocks.size())
        throw ConfigError("encoding has " + std::to_string(arch.size()) + " blocks, config has " +
                          std::to_string(cfg.blocks.size()));
    for (size_t b = 0; b < arch.size(); ++b) {
        const std::string tag = "block " + std::to_string(b + 1);
        const ArchChoice& ch = arch[b];
        if (ch.cell < 0 || size_t(ch.cell) >= cfg.blocks[b].cells.size())
            throw ConfigError(tag + ": cell index " + std::to_string(ch.cell) + " out of range");
        const CellSpec& cell = cfg.blocks[b].cells[size_t(ch.cell)];
        if (int(ch.ops.size()) != cell.depth)
            throw ConfigError(tag + ": expected " + std::to_string(cell.depth) + " op choices, got " +
                              std::to_string(ch.ops.size()));
        for (size_t l = 0; l < ch.ops.size(); ++l)
            if (ch.ops[l] < 0 || size_t(ch.ops[l]) >= cfg.ops.size())
                throw ConfigError(tag + " layer " + std::to_string(l + 1) + ": op index out of range");
    }
}

// Compact text form, e.g. "c0:1.3/c1:0.2.2" for two blocks.
inline std::string arch_to_string(const ArchEncoding& arch) {
    std::ostringstream os;
    for (size_t b = 0; b < arch.size(); ++b) {
        if (b) os << '/';
        os << 'c' << arch[b].cell << ':';
        for (size_t l = 0; l < arch[b].ops.size(); ++l) {
            if (l) os << '.';
            os << arch[b].ops[l];
        }
    }
    return os.str();
}

inline ArchEncoding arch_from_string(const std::string& s) {
    ArchEncoding arch;
    std::istringstream is(s);
    std::string part;
    while (std::getline(is, part, '/')) {
        if (part.size() < 3 || part[0] != 'c') throw ConfigError("bad arch segment '" + part + "'");
        const size_t colon = part.find(':');
        if (colon == std::string::npos) throw ConfigError("bad arch segment '" + part + "'");
        ArchChoice ch;
        try {
            ch.cell = std::stoi(part.substr(1, colon - 1));
            std::istringstream ops(part.substr(colon + 1));
            std::string tok;
            while (std::getline(ops, tok, '.')) ch.ops.push_back(std::stoi(tok));
        } catch (const std::exception&) {
            throw ConfigError("bad arch segment '" + part + "'");
        }
        if (ch.ops.empty()) throw ConfigError("bad arch segment '" + part + "'");
        arch.push_back(std::move(ch));
    }
    if (arch.empty()) throw ConfigError("empty arch string");
    return arch;
}

// Desk-scale default: three stride-2 blocks from a 32x32 input, two cell
// variants per block at half the teacher width, four candidate ops.
inline SupernetConfig desk_config() {
    SupernetConfig cfg;
    cfg.ops = {{3, 3, 0.25}, {3, 6, 0.25}, {5, 3, 0.25}, {5, 6, 0.25}};
    cfg.input_size = 32;
    cfg.input_channels = 3;
    cfg.stem_width = 8;
    cfg.num_classes = 10;
    const int teacher_w[3] = {16, 32, 64};
    int prev = cfg.stem_width;
    for (int b = 0; b < 3; ++b) {
        BlockSpec blk;
        blk.teacher_in_width = prev;
        blk.teacher_out_width = teacher_w[b];
        blk.stride = 2;
        blk.cells = {{2, teacher_w[b] / 2}, {3, teacher_w[b] / 2}};
        cfg.blocks.push_back(blk);
        prev = teacher_w[b];
    }
    return cfg;
}

// The full-scale supernet layout from the reference design: six blocks,
// six candidate ops. Used only for exact accounting (space size, drop
// rates); the widths are the published ones.
inline SupernetConfig reference_config() {
    SupernetConfig cfg;
    cfg.ops = {{3, 3, 0.25}, {3, 6, 0.25}, {5, 3, 0.25}, {5, 6, 0.25}, {7, 3, 0.25}, {7, 6, 0.25}};
    cfg.input_size = 224;
    cfg.input_channels = 3;
    cfg.stem_width = 32;
    cfg.num_classes = 1000;
    struct Row {
        int t_out, stride;
        std::vector<CellSpec> cells;
    };
    const std::vector<Row> rows = {
        {48, 2, {{2, 24}, {3, 24}, {2, 32}}},  {80, 2, {{2, 40}, {3, 40}, {4, 40}}},
        {160, 2, {{2, 80}, {3, 80}, {4, 80}}}, {224, 1, {{3, 112}, {4, 112}, {4, 96}}},
        {384, 2, {{4, 192}, {5, 192}, {5, 160}}}, {640, 1, {{1, 320}}},
    };
    int prev = cfg.stem_width;
    for (const Row& r : rows) {
        BlockSpec blk;
        blk.teacher_in_width = prev;
        blk.teacher_out_width = r.t_out;
        blk.stride = r.stride;
        blk.cells = r.cells;
        cfg.blocks.push_back(blk);
        prev = r.t_out;
    }
    return cfg;
}

}  // namespace bnas
