#pragma once

#include <thread>
#include <vector>

#include "bnas/csv.hpp"
#include "bnas/dataset.hpp"
#include "bnas/model_builder.hpp"
#include "bnas/optim.hpp"
#include "bnas/teacher.hpp"

namespace bnas {

enum class Strategy { dna, s1, s2 };

inline const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::dna: return "dna";
        case Strategy::s1: return "s1";
        case Strategy::s2: return "s2";
    }
    return "?";
}

inline Strategy parse_strategy(const std::string& s) {
    if (s == "dna") return Strategy::dna;
    if (s == "s1") return Strategy::s1;
    if (s == "s2") return Strategy::s2;
    throw ConfigError("unknown strategy '" + s + "'");
}

struct DistillConfig {
    int epochs_per_cell = 20;
    int batch_size = 50;
    uint64_t seed = 1;
    Strategy strategy = Strategy::dna;
    double lr_block1 = 0.002;
    double lr_rest = 0.005;
    double lr_decay = 0.9;  // per epoch
    OptimRule rule = OptimRule::adam;
};

struct LossPoint {
    int epoch = 0;
    int64_t step = 0;
    int cell = 0;
    double loss = 0.0;
};

struct BlockCheckpoint {
    ParameterSet<float> params;
    std::vector<LossPoint> curve;
    int epochs = 0;
};

inline std::vector<int> sample_path(int depth, int num_ops, Rng& rng) {
    std::vector<int> path(static_cast<size_t>(depth));
    for (int& p : path) p = int(rng.uniform_int(uint64_t(num_ops)));
    return path;
}

inline std::string curve_to_csv(const std::vector<LossPoint>& curve) {
    CsvWriter w({"epoch", "step", "cell", "loss"});
    for (const LossPoint& p : curve)
        w.row({std::to_string(p.epoch), std::to_string(p.step), std::to_string(p.cell), csv_double(p.loss)});
    return w.str();
}

namespace detail {

inline TensorF gather_rows(const TensorF& all, const std::vector<int64_t>& order, int64_t start, int64_t count) {
    const int64_t px = all.numel() / all.shape[0];
    Shape s = all.shape;
    s[0] = count;
    TensorF out(s);
    for (int64_t i = 0; i < count; ++i)
        std::copy_n(all.ptr() + order[size_t(start + i)] * px, px, out.ptr() + i * px);
    return out;
}

}  // namespace detail

// Mimicry training of one block against the frozen teacher features. Every
// step picks the next cell round-robin, samples one path uniformly, and
// minimizes the mean-square feature error; only the sampled path's
// parameters receive gradients. All randomness is derived from (seed,
// block), so blocks can train in any order or in parallel and produce
// bit-identical checkpoints.
inline BlockCheckpoint train_block(const SupernetConfig& cfg, size_t block, const FeatureCache& cache,
                                   const DistillConfig& dc) {
    if (dc.strategy != Strategy::dna)
        throw ConfigError("train_block handles the parallel strategy; use train_blocks_sequential for s1/s2");
    const SplitFeatures& train = cache.split("train");
    const TensorF& inputs = block == 0 ? train.input : train.blocks.at(block - 1);
    const TensorF& targets = train.blocks.at(block);

    BlockCheckpoint ck;
    ck.epochs = dc.epochs_per_cell;
    init_block_params(cfg, block, ck.params, dc.seed);

    const int cells = int(cfg.blocks[block].cells.size());
    const int C = int(cfg.ops.size());
    const int64_t n = inputs.shape[0];
    Rng path_rng = Rng::derive(dc.seed, "path-sample", uint64_t(block));
    OptimConfig oc;
    oc.rule = dc.rule;
    oc.lr = block == 0 ? dc.lr_block1 : dc.lr_rest;
    std::vector<int64_t> order(static_cast<size_t>(n));
    int64_t step = 0;
    for (int epoch = 0; epoch < dc.epochs_per_cell; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle = Rng::derive(dc.seed, "block-shuffle", uint64_t(block), uint64_t(epoch));
        for (int64_t i = n - 1; i > 0; --i)
            std::swap(order[size_t(i)], order[size_t(shuffle.uniform_int(uint64_t(i + 1)))]);
        for (int64_t start = 0; start < n; start += dc.batch_size) {
            const int64_t count = std::min<int64_t>(dc.batch_size, n - start);
            const TensorF x = detail::gather_rows(inputs, order, start, count);
            const TensorF y = detail::gather_rows(targets, order, start, count);
            for (int c = 0; c < cells; ++c) {
                const std::vector<int> path = sample_path(cfg.blocks[block].cells[size_t(c)].depth, C, path_rng);
                const Graph g = build_cell_path_graph(cfg, block, size_t(c), path, true);
                double loss;
                try {
                    Tape<float> tape = forward(g, {x, y}, ck.params, RunMode::train);
                    loss = double(tape.output().data[0]);
                    ck.params.clear_grads();
                    backward_scalar(tape, ck.params);
                } catch (const NumericError& e) {
                    throw NumericError("block " + std::to_string(block + 1) + " cell " + std::to_string(c) +
                                       " step " + std::to_string(step) + ": " + e.what());
                }
                optimizer_step(ck.params, oc);
                ck.curve.push_back({epoch, step, c, loss});
                step += 1;
            }
        }
        oc.lr *= dc.lr_decay;
    }
    return ck;
}

// Trains every block, optionally each in its own thread. The per-block
// RNG derivation makes the two modes bit-identical.
inline std::vector<BlockCheckpoint> train_all_blocks(const SupernetConfig& cfg, const FeatureCache& cache,
                                                     const DistillConfig& dc, bool parallel) {
    const size_t n = cfg.blocks.size();
    std::vector<BlockCheckpoint> out(n);
    if (!parallel) {
        for (size_t b = 0; b < n; ++b) out[b] = train_block(cfg, b, cache, dc);
        return out;
    }
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errs(n);
    for (size_t b = 0; b < n; ++b)
        threads.emplace_back([&, b] {
            try {
                out[b] = train_block(cfg, b, cache, dc);
            } catch (...) {
                errs[b] = std::current_exception();
            }
        });
    for (auto& t : threads) t.join();
    for (auto& e : errs)
        if (e) std::rethrow_exception(e);
    return out;
}

namespace detail {

// Chained path graph over blocks [0, upto]: input is the teacher prelude
// feature, output mimics block `upto`. Used by the sequential strategies.
inline Graph build_chain_graph(const SupernetConfig& cfg, const std::vector<ArchChoice>& choices, size_t upto,
                               bool with_loss) {
    Graph g;
    int x = g.add_input("x", {1, cfg.blocks[0].teacher_in_width, 1, 1});
    for (size_t b = 0; b <= upto; ++b) {
        const CellSpec& cs = cfg.blocks[b].cells.at(size_t(choices[b].cell));
        for (int l = 0; l < cs.depth; ++l)
            x = append_mbconv(g, op_prefix(b, size_t(choices[b].cell), l, choices[b].ops[size_t(l)]),
                              supernet_layer_dims(cfg.blocks[b], cs, l),
                              cfg.ops.at(size_t(choices[b].ops[size_t(l)])), x);
    }
    if (with_loss) {
        int y = g.add_input("target", {1, cfg.blocks[upto].teacher_out_width, 1, 1});
        g.add("loss", mse_loss_spec(), {x, y});
    }
    return g;
}

inline ParameterSet<float> filter_block_params(const ParameterSet<float>& ps, size_t block) {
    const std::string prefix = "b" + std::to_string(block) + ".";
    ParameterSet<float> out;
    for (const auto& [name, p] : ps.raw())
        if (name.rfind(prefix, 0) == 0) out.raw().emplace(name, p);
    return out;
}

}  // namespace detail

// Sequential ablation strategies. Both feed the student's own previous
// blocks instead of the teacher feature:
//   s1: at stage i, blocks 1..i are freshly initialized and train jointly.
//   s2: previous blocks are frozen at their stage checkpoints; their paths
//       are still resampled per step, and they run in eval mode so their
//       parameters (running stats included) stay bit-identical.
// Stage 1 of either strategy consumes the same RNG streams as the parallel
// strategy, so its checkpoint matches train_block(block 1) exactly.
inline std::vector<BlockCheckpoint> train_blocks_sequential(const SupernetConfig& cfg, const FeatureCache& cache,
                                                            const DistillConfig& dc, size_t num_blocks) {
    if (dc.strategy == Strategy::dna)
        throw ConfigError("train_blocks_sequential handles s1/s2; use train_block or train_all_blocks for dna");
    if (num_blocks == 0 || num_blocks > cfg.blocks.size()) throw ConfigError("bad block count");
    const SplitFeatures& train = cache.split("train");
    const int C = int(cfg.ops.size());
    std::vector<BlockCheckpoint> out;

    for (size_t block = 0; block < num_blocks; ++block) {
        BlockCheckpoint ck;
        ck.epochs = dc.epochs_per_cell;
        ParameterSet<float> ps;
        if (dc.strategy == Strategy::s1) {
            for (size_t b = 0; b <= block; ++b) init_block_params(cfg, b, ps, dc.seed);
        } else {
            init_block_params(cfg, block, ps, dc.seed);
        }

        const int cells = int(cfg.blocks[block].cells.size());
        const int64_t n = train.input.shape[0];
        Rng path_rng = Rng::derive(dc.seed, "path-sample", uint64_t(block));
        Rng prev_rng = Rng::derive(dc.seed, "prev-path", uint64_t(block));
        OptimConfig oc;
        oc.rule = dc.rule;
        oc.lr = block == 0 ? dc.lr_block1 : dc.lr_rest;
        std::vector<int64_t> order(static_cast<size_t>(n));
        int64_t step = 0;
        for (int epoch = 0; epoch < dc.epochs_per_cell; ++epoch) {
            std::iota(order.begin(), order.end(), 0);
            Rng shuffle = Rng::derive(dc.seed, "block-shuffle", uint64_t(block), uint64_t(epoch));
            for (int64_t i = n - 1; i > 0; --i)
                std::swap(order[size_t(i)], order[size_t(shuffle.uniform_int(uint64_t(i + 1)))]);
            for (int64_t start = 0; start < n; start += dc.batch_size) {
                const int64_t count = std::min<int64_t>(dc.batch_size, n - start);
                TensorF x = detail::gather_rows(train.input, order, start, count);
                const TensorF y = detail::gather_rows(train.blocks.at(block), order, start, count);
                for (int c = 0; c < cells; ++c) {
                    // previous-block choices, resampled every step
                    std::vector<ArchChoice> choices(block + 1);
                    for (size_t b = 0; b < block; ++b) {
                        choices[b].cell = int(prev_rng.uniform_int(uint64_t(cfg.blocks[b].cells.size())));
                        choices[b].ops =
                            sample_path(cfg.blocks[b].cells[size_t(choices[b].cell)].depth, C, prev_rng);
                    }
                    choices[block].cell = c;
                    choices[block].ops =
                        sample_path(cfg.blocks[block].cells[size_t(c)].depth, C, path_rng);

                    double loss;
                    try {
                        if (dc.strategy == Strategy::s1) {
                            const Graph g = detail::build_chain_graph(cfg, choices, block, true);
                            Tape<float> tape = forward(g, {x, y}, ps, RunMode::train);
                            loss = double(tape.output().data[0]);
                            ps.clear_grads();
                            backward_scalar(tape, ps);
                        } else {
                            TensorF cur = x;
                            for (size_t b = 0; b < block; ++b) {
                                const Graph g = build_cell_path_graph(cfg, b, size_t(choices[b].cell),
                                                                      choices[b].ops, false);
                                cur = forward(g, {cur}, out[b].params, RunMode::eval).output();
                            }
                            const Graph g =
                                build_cell_path_graph(cfg, block, size_t(c), choices[block].ops, true);
                            Tape<float> tape = forward(g, {cur, y}, ps, RunMode::train);
                            loss = double(tape.output().data[0]);
                            ps.clear_grads();
                            backward_scalar(tape, ps);
                        }
                    } catch (const NumericError& e) {
                        throw NumericError("stage " + std::to_string(block + 1) + " cell " + std::to_string(c) +
                                           " step " + std::to_string(step) + ": " + e.what());
                    }
                    optimizer_step(ps, oc);
                    ck.curve.push_back({epoch, step, c, loss});
                    step += 1;
                }
            }
            oc.lr *= dc.lr_decay;
        }
        ck.params = dc.strategy == Strategy::s1 ? detail::filter_block_params(ps, block) : std::move(ps);
        out.push_back(std::move(ck));
    }
    return out;
}

struct SposCheckpoint {
    ParameterSet<float> params;
    std::vector<LossPoint> curve;  // cell field records the sampled block-1 cell
    int total_epochs = 0;
};

// End-to-end single-path baseline: one shared-weight supernet trained with
// classification loss, one uniformly sampled full path per step. The epoch
// budget equals the per-block mimicry budgets summed, and the learning rate
// decays to the same endpoint over that longer horizon.
inline SposCheckpoint train_spos_baseline(const SupernetConfig& cfg, const Dataset& train,
                                          const DistillConfig& dc) {
    SposCheckpoint ck;
    int total_epochs = 0;
    for (const BlockSpec& b : cfg.blocks) total_epochs += int(b.cells.size()) * dc.epochs_per_cell;
    ck.total_epochs = total_epochs;

    for (size_t b = 0; b < cfg.blocks.size(); ++b) init_block_params(cfg, b, ck.params, dc.seed);
    {
        ArchEncoding probe;
        for (const BlockSpec& b : cfg.blocks) probe.push_back({0, std::vector<int>(size_t(b.cells[0].depth), 0)});
        Graph g = build_shared_path_graph(cfg, probe, true);
        init_params(g, ck.params, Rng::derive(dc.seed, "shared-stem-head"));
    }

    Rng arch_rng = Rng::derive(dc.seed, "shared-path");
    OptimConfig oc;
    oc.rule = dc.rule;
    oc.lr = dc.lr_rest;
    const double per_epoch_decay = std::pow(dc.lr_decay, double(dc.epochs_per_cell) / double(total_epochs));
    const int64_t n = train.size();
    const int64_t px = train.images.numel() / n;
    std::vector<int64_t> order(static_cast<size_t>(n));
    int64_t step = 0;
    for (int epoch = 0; epoch < total_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle = Rng::derive(dc.seed, "shared-shuffle", uint64_t(epoch));
        for (int64_t i = n - 1; i > 0; --i)
            std::swap(order[size_t(i)], order[size_t(shuffle.uniform_int(uint64_t(i + 1)))]);
        for (int64_t start = 0; start < n; start += dc.batch_size) {
            const int64_t count = std::min<int64_t>(dc.batch_size, n - start);
            TensorF images({count, train.images.shape[1], train.images.shape[2], train.images.shape[3]});
            TensorF labels({count});
            for (int64_t i = 0; i < count; ++i) {
                const int64_t row = order[size_t(start + i)];
                std::copy_n(train.images.ptr() + row * px, px, images.ptr() + i * px);
                labels.data[size_t(i)] = float(train.labels[size_t(row)]);
            }
            ArchEncoding arch;
            for (const BlockSpec& blk : cfg.blocks) {
                ArchChoice ch;
                ch.cell = int(arch_rng.uniform_int(uint64_t(blk.cells.size())));
                ch.ops = sample_path(blk.cells[size_t(ch.cell)].depth, int(cfg.ops.size()), arch_rng);
                arch.push_back(std::move(ch));
            }
            const Graph g = build_shared_path_graph(cfg, arch, true);
            double loss;
            try {
                Tape<float> tape = forward(g, {images, labels}, ck.params, RunMode::train);
                loss = double(tape.output().data[0]);
                ck.params.clear_grads();
                backward_scalar(tape, ck.params);
            } catch (const NumericError& e) {
                throw NumericError("shared-path step " + std::to_string(step) + ": " + e.what());
            }
            optimizer_step(ck.params, oc);
            ck.curve.push_back({epoch, step, arch[0].cell, loss});
            step += 1;
        }
        oc.lr *= per_epoch_decay;
    }
    return ck;
}

}  // namespace bnas
