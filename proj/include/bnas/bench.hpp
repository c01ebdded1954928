#pragma once

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "bnas/classifier.hpp"
#include "bnas/distill.hpp"
#include "bnas/evaluator.hpp"
#include "bnas/searcher.hpp"

namespace bnas {

// Uniform over the whole space: cells weighted by their path counts, then a
// uniform path. Duplicates are rejected so the trial set stays distinct.
inline std::vector<ArchEncoding> sample_architectures(const SupernetConfig& cfg, int count, uint64_t seed) {
    if (BigInt(count) > space_size(cfg))
        throw ConfigError("asked for " + std::to_string(count) + " distinct architectures from a smaller space");
    const int C = int(cfg.ops.size());
    Rng rng = Rng::derive(seed, "arch-sample");
    std::vector<ArchEncoding> out;
    std::set<std::string> seen;
    while (int(out.size()) < count) {
        ArchEncoding arch;
        for (const BlockSpec& blk : cfg.blocks) {
            uint64_t total = 0;
            std::vector<uint64_t> weight;
            for (const CellSpec& cs : blk.cells) {
                uint64_t w = 1;
                for (int l = 0; l < cs.depth; ++l) w *= uint64_t(C);
                weight.push_back(w);
                total += w;
            }
            uint64_t pick = rng.uniform_int(total);
            ArchChoice ch;
            for (size_t c = 0; c < weight.size(); ++c) {
                if (pick < weight[c]) {
                    ch.cell = int(c);
                    break;
                }
                pick -= weight[c];
            }
            for (int l = 0; l < blk.cells[size_t(ch.cell)].depth; ++l) ch.ops.push_back(int(rng.uniform_int(uint64_t(C))));
            arch.push_back(std::move(ch));
        }
        if (seen.insert(arch_to_string(arch)).second) out.push_back(std::move(arch));
    }
    return out;
}

// Negated weighted sum of the blocks' ranked losses; higher predicts better.
inline double dna_score(const SupernetConfig& cfg, const std::vector<PathRanking>& rankings,
                        const ArchEncoding& arch) {
    if (arch.size() != rankings.size()) throw ConfigError("architecture and rankings disagree on block count");
    double score = 0.0;
    for (size_t b = 0; b < arch.size(); ++b) {
        const EvalRecord* hit = nullptr;
        for (const EvalRecord& rec : rankings[b].records)
            if (rec.cell == arch[b].cell && rec.path == arch[b].ops) {
                hit = &rec;
                break;
            }
        if (!hit)
            throw ConfigError("block " + std::to_string(b + 1) + " ranking has no entry for cell " +
                              std::to_string(arch[b].cell) + " path " + path_to_string(arch[b].ops));
        score -= block_lambda(cfg, b) * hit->loss;
    }
    return score;
}

// Validation accuracy of the candidate path with weights inherited from the
// shared one-shot checkpoint, no further training.
inline double spos_predict(const SupernetConfig& cfg, SposCheckpoint& ckpt, const ArchEncoding& arch,
                           const Dataset& val) {
    const Graph g = build_shared_path_graph(cfg, arch, false);
    return evaluate_accuracy(g, ckpt.params, val);
}

struct RetrainResult {
    double best_acc = 0.0;
    double final_acc = 0.0;
    std::vector<double> epoch_acc;
};

// Trains the architecture stand-alone from scratch and reports the best
// validation accuracy seen at any epoch end.
inline RetrainResult retrain_standalone(const SupernetConfig& cfg, const ArchEncoding& arch, const Dataset& train,
                                        const Dataset& val, const FitConfig& fc) {
    validate_encoding(cfg, arch);
    const Graph train_g = build_standalone(cfg, arch, true);
    const Graph eval_g = build_standalone(cfg, arch, false);
    ParameterSet<float> ps;
    Rng init = Rng::derive(fc.seed, "retrain-init");
    init_params(train_g, ps, init);

    RetrainResult res;
    int last_epoch = 0;
    auto eval_epoch = [&] { res.epoch_acc.push_back(evaluate_accuracy(eval_g, ps, val)); };
    fit_classifier_hooked(train_g, ps, train, fc, [&](int epoch, int64_t, double) {
        if (epoch != last_epoch) {
            eval_epoch();
            last_epoch = epoch;
        }
    });
    eval_epoch();
    for (double a : res.epoch_acc) res.best_acc = std::max(res.best_acc, a);
    res.final_acc = res.epoch_acc.back();
    return res;
}

struct RankCorrelation {
    double kendall_tau = 0.0;
    double spearman_rho = 0.0;
};

// Kendall tau-b and Spearman rho with average-rank tie handling. Pair
// counting is quadratic, which is exact and cheap at benchmark sizes.
inline RankCorrelation rank_correlation(const std::vector<double>& pred, const std::vector<double>& truth) {
    const size_t n = pred.size();
    if (truth.size() != n) throw ConfigError("rank_correlation: length mismatch");
    if (n < 2) throw ConfigError("rank_correlation needs at least two points");

    int64_t concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
    for (size_t i = 0; i < n; ++i)
        for (size_t j = i + 1; j < n; ++j) {
            const double dx = pred[i] - pred[j], dy = truth[i] - truth[j];
            if (dx == 0.0 && dy == 0.0) {
                ties_x += 1;
                ties_y += 1;
            } else if (dx == 0.0) {
                ties_x += 1;
            } else if (dy == 0.0) {
                ties_y += 1;
            } else if ((dx > 0.0) == (dy > 0.0)) {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    const double n0 = double(n) * double(n - 1) / 2.0;
    const double denom = std::sqrt((n0 - double(ties_x)) * (n0 - double(ties_y)));
    if (!(denom > 0.0)) throw DegenerateTargetError("rank correlation over a constant vector");

    RankCorrelation rc;
    rc.kendall_tau = double(concordant - discordant) / denom;

    auto ranks = [](const std::vector<double>& v) {
        const size_t m = v.size();
        std::vector<size_t> idx(m);
        std::iota(idx.begin(), idx.end(), size_t(0));
        std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
        std::vector<double> r(m, 0.0);
        size_t i = 0;
        while (i < m) {
            size_t j = i;
            while (j + 1 < m && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = (double(i) + double(j)) / 2.0 + 1.0;  // average rank, 1-based
            for (size_t k = i; k <= j; ++k) r[idx[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const std::vector<double> rx = ranks(pred), ry = ranks(truth);
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < n; ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= double(n);
    my /= double(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) throw DegenerateTargetError("rank correlation over a constant vector");
    rc.spearman_rho = sxy / std::sqrt(sxx * syy);
    return rc;
}

struct BenchTrial {
    int id = 0;
    ArchEncoding arch;
    double dna_score = 0.0;
    double spos_score = 0.0;
    double true_acc = 0.0;
    uint64_t seed = 0;  // per-trial retrain seed, derived from (global seed, id)
};

struct BenchReport {
    std::vector<BenchTrial> trials;
    RankCorrelation dna;   // predictor scores vs retrain accuracy
    RankCorrelation spos;  // inherited accuracy vs retrain accuracy
};

inline BenchReport bench_report(const std::vector<BenchTrial>& trials) {
    if (trials.size() < 3) throw ConfigError("bench report needs at least three trials");
    BenchReport rep;
    rep.trials = trials;
    std::vector<double> dna, spos, truth;
    for (const BenchTrial& t : trials) {
        dna.push_back(t.dna_score);
        spos.push_back(t.spos_score);
        truth.push_back(t.true_acc);
    }
    rep.dna = rank_correlation(dna, truth);
    rep.spos = rank_correlation(spos, truth);
    return rep;
}

inline std::string bench_to_csv(const std::vector<BenchTrial>& trials) {
    CsvWriter w({"arch_id", "encoding", "dna_score", "spos_score", "true_acc", "seed"});
    for (const BenchTrial& t : trials)
        w.row({std::to_string(t.id), arch_to_string(t.arch), csv_double(t.dna_score), csv_double(t.spos_score),
               csv_double(t.true_acc), std::to_string(t.seed)});
    return w.str();
}

inline std::vector<BenchTrial> bench_from_csv(const std::string& text) {
    std::vector<BenchTrial> trials;
    const auto rows = parse_csv(text);
    for (size_t i = 1; i < rows.size(); ++i) {
        const auto& f = rows[i];
        if (f.size() != 6) throw DataError("bench row has " + std::to_string(f.size()) + " fields");
        BenchTrial t;
        t.id = std::stoi(f[0]);
        t.arch = arch_from_string(f[1]);
        t.dna_score = std::stod(f[2]);
        t.spos_score = std::stod(f[3]);
        t.true_acc = std::stod(f[4]);
        t.seed = std::stoull(f[5]);
        trials.push_back(std::move(t));
    }
    return trials;
}

inline std::string bench_report_text(const BenchReport& rep) {
    std::ostringstream os;
    os << "trials " << rep.trials.size() << "\n";
    os << "dna kendall_tau " << csv_double(rep.dna.kendall_tau) << " spearman_rho "
       << csv_double(rep.dna.spearman_rho) << "\n";
    os << "spos kendall_tau " << csv_double(rep.spos.kendall_tau) << " spearman_rho "
       << csv_double(rep.spos.spearman_rho) << "\n";
    return os.str();
}

}  // namespace bnas
