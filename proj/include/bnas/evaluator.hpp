#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "bnas/cost_model.hpp"
#include "bnas/csv.hpp"
#include "bnas/distill.hpp"
#include "bnas/model_builder.hpp"
#include "bnas/teacher.hpp"

namespace bnas {

// Mean absolute difference over the population standard deviation of the
// target's elements. Scale-free: both sides scale linearly.
inline double relative_l1_given_sigma(const TensorF& x, const TensorF& y, double sigma) {
    if (x.shape != y.shape)
        throw ShapeError("relative-l1 shape mismatch " + shape_str(x.shape) + " vs " + shape_str(y.shape));
    if (!(sigma > 0.0)) throw DegenerateTargetError("relative-l1 target deviation is zero");
    double acc = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) acc += std::abs(double(x.data[i]) - double(y.data[i]));
    return acc / double(x.numel()) / sigma;
}

inline double relative_l1(const TensorF& x, const TensorF& y) {
    if (x.shape != y.shape)
        throw ShapeError("relative-l1 shape mismatch " + shape_str(x.shape) + " vs " + shape_str(y.shape));
    double sum = 0.0;
    for (float v : y.data) sum += double(v);
    const double mean = sum / double(y.numel());
    double vsum = 0.0;
    for (float v : y.data) {
        const double d = double(v) - mean;
        vsum += d * d;
    }
    return relative_l1_given_sigma(x, y, std::sqrt(vsum / double(y.numel())));
}

struct EvalRecord {
    int block = 0;
    int cell = 0;
    std::vector<int> path;
    double loss = 0.0;
    int64_t params = 0;
    int64_t madds = 0;
};

struct PathRanking {
    std::vector<EvalRecord> records;  // ascending by (loss, params, madds, cell, path)
};

struct DfsStats {
    int64_t op_calls = 0;      // one per candidate-op forward
    int64_t peak_bytes = 0;    // resident activation stack, worst case
};

namespace detail {

struct DfsDriver {
    ParameterSet<float>& ps;
    std::vector<Graph> op_graphs;  // [layer * C + op]
    const TensorF* target = nullptr;
    double sigma = 0.0;
    DfsStats* stats = nullptr;
    std::vector<double>* out = nullptr;
    size_t leaf = 0;
    int depth = 0, C = 0;

    void descend(const TensorF& act, int layer) {
        for (int op = 0; op < C; ++op) {
            const Graph& g = op_graphs[size_t(layer * C + op)];
            TensorF y = forward(g, {act}, ps, RunMode::eval).output();
            stats->op_calls += 1;
            if (layer == depth - 1) {
                (*out)[leaf++] += relative_l1_given_sigma(y, *target, sigma);
            } else {
                descend(y, layer + 1);
            }
        }
    }
};

}  // namespace detail

// Rates all C^d paths of one cell against the teacher feature by walking
// the op tree depth-first and reusing each prefix activation for all C
// continuations: sum_k C^k op executions instead of d * C^d. Losses are
// averaged over validation batches; sigma comes from whole-split stats so
// batching cannot move rankings.
inline std::vector<double> dfs_evaluate(const SupernetConfig& cfg, size_t block, size_t cell,
                                        ParameterSet<float>& params, const TensorF& y_prev, const TensorF& y_curr,
                                        double sigma, DfsStats* stats = nullptr, int64_t batch_size = 50,
                                        int64_t activation_cap_bytes = int64_t(1) << 30) {
    const CellSpec& cs = cfg.blocks.at(block).cells.at(cell);
    const int C = int(cfg.ops.size());
    const int d = cs.depth;

    // memory guard: the DFS keeps one activation per depth
    {
        const std::vector<int64_t> sizes = block_out_sizes(cfg);
        const int64_t s_in = sizes[block], s_out = sizes[block + 1];
        int64_t bytes = batch_size * int64_t(cfg.blocks[block].teacher_in_width) * s_in * s_in * 4;
        for (int l = 0; l < d; ++l)
            bytes += batch_size * int64_t(l == d - 1 ? cfg.blocks[block].teacher_out_width : cs.width) * s_out *
                     s_out * 4;
        if (bytes > activation_cap_bytes)
            throw OverflowError("evaluation would hold " + std::to_string(bytes) +
                                " activation bytes, above the configured cap");
        if (stats) stats->peak_bytes = std::max(stats->peak_bytes, bytes);
    }

    int64_t total = 1;
    for (int l = 0; l < d; ++l) total *= C;
    std::vector<double> losses(size_t(total), 0.0);

    DfsStats local;
    detail::DfsDriver drv{params, {}, nullptr, sigma, stats ? stats : &local, &losses, 0, d, C};
    drv.op_graphs.reserve(size_t(d * C));
    for (int l = 0; l < d; ++l)
        for (int op = 0; op < C; ++op) drv.op_graphs.push_back(build_op_graph(cfg, block, cell, l, op));

    const int64_t n = y_prev.shape[0];
    const int64_t in_px = y_prev.numel() / n;
    const int64_t out_px = y_curr.numel() / n;
    int64_t batches = 0;
    for (int64_t start = 0; start < n; start += batch_size) {
        const int64_t count = std::min(batch_size, n - start);
        Shape in_shape = y_prev.shape;
        in_shape[0] = count;
        TensorF x(in_shape);
        std::copy_n(y_prev.ptr() + start * in_px, count * in_px, x.ptr());
        Shape out_shape = y_curr.shape;
        out_shape[0] = count;
        TensorF y(out_shape);
        std::copy_n(y_curr.ptr() + start * out_px, count * out_px, y.ptr());
        drv.target = &y;
        drv.leaf = 0;
        drv.descend(x, 0);
        batches += 1;
    }
    for (double& l : losses) l /= double(batches);
    return losses;
}

inline bool eval_record_less(const EvalRecord& a, const EvalRecord& b) {
    if (a.loss != b.loss) return a.loss < b.loss;
    if (a.params != b.params) return a.params < b.params;
    if (a.madds != b.madds) return a.madds < b.madds;
    if (a.cell != b.cell) return a.cell < b.cell;
    return a.path < b.path;
}

// Rates every (cell, path) of a block on the validation features and sorts
// ascending by loss with the cost-then-lexicographic tie-break.
inline PathRanking rank_block(const SupernetConfig& cfg, size_t block, BlockCheckpoint& ckpt,
                              const FeatureCache& cache, const CostTable& table, DfsStats* stats = nullptr,
                              int64_t batch_size = 50) {
    const SplitFeatures& val = cache.split("val");
    const TensorF& y_prev = block == 0 ? val.input : val.blocks.at(block - 1);
    const TensorF& y_curr = val.blocks.at(block);
    const double sigma = val.stddev.at(block);

    PathRanking ranking;
    for (size_t c = 0; c < cfg.blocks[block].cells.size(); ++c) {
        const std::vector<std::vector<int>> paths = enumerate_paths(cfg.blocks[block].cells[c], int(cfg.ops.size()));
        const std::vector<double> losses =
            dfs_evaluate(cfg, block, c, ckpt.params, y_prev, y_curr, sigma, stats, batch_size);
        for (size_t p = 0; p < paths.size(); ++p) {
            EvalRecord rec;
            rec.block = int(block);
            rec.cell = int(c);
            rec.path = paths[p];
            rec.loss = losses[p];
            Cost cost;
            for (size_t l = 0; l < paths[p].size(); ++l)
                cost += table.at(int(block), int(c), int(l), paths[p][size_t(l)]);
            rec.params = cost.params;
            rec.madds = cost.madds;
            ranking.records.push_back(std::move(rec));
        }
    }
    std::sort(ranking.records.begin(), ranking.records.end(), eval_record_less);
    return ranking;
}

inline std::string path_to_string(const std::vector<int>& path) {
    std::string s;
    for (size_t i = 0; i < path.size(); ++i) {
        if (i) s += '.';
        s += std::to_string(path[i]);
    }
    return s;
}

inline std::vector<int> path_from_string(const std::string& s) {
    std::vector<int> path;
    std::istringstream is(s);
    std::string tok;
    while (std::getline(is, tok, '.')) path.push_back(std::stoi(tok));
    return path;
}

inline std::string ranking_to_csv(const PathRanking& r) {
    CsvWriter w({"block", "cell", "path", "rel_l1", "params", "madds"});
    for (const EvalRecord& rec : r.records)
        w.row({std::to_string(rec.block + 1), std::to_string(rec.cell), path_to_string(rec.path),
               csv_double(rec.loss), std::to_string(rec.params), std::to_string(rec.madds)});
    return w.str();
}

inline PathRanking ranking_from_csv(const std::string& text) {
    PathRanking r;
    const auto rows = parse_csv(text);
    for (size_t i = 1; i < rows.size(); ++i) {
        const auto& f = rows[i];
        if (f.size() != 6) throw DataError("ranking row has " + std::to_string(f.size()) + " fields");
        EvalRecord rec;
        rec.block = std::stoi(f[0]) - 1;
        rec.cell = std::stoi(f[1]);
        rec.path = path_from_string(f[2]);
        rec.loss = std::stod(f[3]);
        rec.params = std::stoll(f[4]);
        rec.madds = std::stoll(f[5]);
        r.records.push_back(std::move(rec));
    }
    return r;
}

}  // namespace bnas
