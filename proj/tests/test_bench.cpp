#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "bnas/bench.hpp"
#include "test_util.hpp"

namespace {

using namespace bnas;
using bnas_test::tiny_config;
using bnas_test::tiny_dataset;

// Every architecture in a config's space, as canonical strings.
std::set<std::string> full_space_strings(const SupernetConfig& cfg) {
    std::vector<ArchEncoding> partial{{}};
    for (const BlockSpec& blk : cfg.blocks) {
        std::vector<ArchEncoding> next;
        for (const ArchEncoding& head : partial)
            for (size_t c = 0; c < blk.cells.size(); ++c)
                for (const std::vector<int>& path : enumerate_paths(blk.cells[c], int(cfg.ops.size()))) {
                    ArchEncoding arch = head;
                    arch.push_back({int(c), path});
                    next.push_back(std::move(arch));
                }
        partial = std::move(next);
    }
    std::set<std::string> out;
    for (const ArchEncoding& a : partial) out.insert(arch_to_string(a));
    return out;
}

TEST(Sampling, DistinctValidAndDeterministic) {
    const SupernetConfig cfg = tiny_config();
    const auto archs = sample_architectures(cfg, 20, 77);
    ASSERT_EQ(archs.size(), 20u);
    std::set<std::string> seen;
    for (const ArchEncoding& a : archs) {
        EXPECT_NO_THROW(validate_encoding(cfg, a));
        EXPECT_TRUE(seen.insert(arch_to_string(a)).second);
    }
    const auto again = sample_architectures(cfg, 20, 77);
    ASSERT_EQ(again.size(), archs.size());
    for (size_t i = 0; i < archs.size(); ++i) EXPECT_EQ(arch_to_string(again[i]), arch_to_string(archs[i]));

    const auto other = sample_architectures(cfg, 20, 78);
    bool any_diff = false;
    for (size_t i = 0; i < other.size(); ++i) any_diff |= arch_to_string(other[i]) != arch_to_string(archs[i]);
    EXPECT_TRUE(any_diff);
}

TEST(Sampling, ExhaustsTheWholeSpaceExactly) {
    const SupernetConfig cfg = tiny_config();
    ASSERT_EQ(space_size(cfg), BigInt(36));
    const auto archs = sample_architectures(cfg, 36, 3);
    std::set<std::string> got;
    for (const ArchEncoding& a : archs) got.insert(arch_to_string(a));
    EXPECT_EQ(got, full_space_strings(cfg));
    EXPECT_THROW(sample_architectures(cfg, 37, 3), ConfigError);
}

TEST(Sampling, WeighsCellsByTheirPathCounts) {
    // Desk blocks pair a depth-2 cell (4^2 paths) with a depth-3 cell
    // (4^3 paths), so a path-uniform sampler picks the deep cell with
    // probability 64/80. A cell-uniform sampler would sit near 0.5.
    const SupernetConfig cfg = desk_config();
    const auto archs = sample_architectures(cfg, 200, 9);
    int deep = 0;
    for (const ArchEncoding& a : archs) deep += a[0].cell == 1 ? 1 : 0;
    const double frac = double(deep) / double(archs.size());
    EXPECT_GT(frac, 0.65);
    EXPECT_LT(frac, 0.95);
}

PathRanking ranking_with(int block, std::vector<EvalRecord> recs) {
    for (EvalRecord& r : recs) r.block = block;
    PathRanking pr;
    pr.records = std::move(recs);
    return pr;
}

TEST(DnaScore, NegatedWeightedLossSum) {
    SupernetConfig cfg = tiny_config();
    std::vector<PathRanking> rankings;
    rankings.push_back(ranking_with(1, {{0, 0, {1}, 0.25, 10, 100},
                                        {0, 1, {0, 1}, 0.125, 12, 120}}));
    rankings.push_back(ranking_with(2, {{0, 1, {0, 1}, 0.5, 20, 200}}));

    const ArchEncoding arch{{0, {1}}, {1, {0, 1}}};
    EXPECT_DOUBLE_EQ(dna_score(cfg, rankings, arch), -0.75);

    const ArchEncoding deep_first{{1, {0, 1}}, {1, {0, 1}}};
    EXPECT_DOUBLE_EQ(dna_score(cfg, rankings, deep_first), -0.625);
    EXPECT_GT(dna_score(cfg, rankings, deep_first), dna_score(cfg, rankings, arch));

    cfg.lambda = {2.0, 4.0};
    EXPECT_DOUBLE_EQ(dna_score(cfg, rankings, deep_first), -(2.0 * 0.125 + 4.0 * 0.5));
}

TEST(DnaScore, RejectsMismatchedOrMissingEntries) {
    const SupernetConfig cfg = tiny_config();
    std::vector<PathRanking> rankings;
    rankings.push_back(ranking_with(1, {{0, 0, {1}, 0.25, 10, 100}}));
    rankings.push_back(ranking_with(2, {{0, 1, {0, 1}, 0.5, 20, 200}}));

    EXPECT_THROW(dna_score(cfg, rankings, ArchEncoding{{0, {1}}}), ConfigError);
    EXPECT_THROW(dna_score(cfg, rankings, ArchEncoding{{0, {0}}, {1, {0, 1}}}), ConfigError);
    EXPECT_THROW(dna_score(cfg, rankings, ArchEncoding{{0, {1}}, {1, {1, 1}}}), ConfigError);
}

TEST(SposPredict, DeterministicAccuracyInRange) {
    const SupernetConfig cfg = tiny_config();
    const Dataset val = tiny_dataset(21, 4);
    const auto archs = sample_architectures(cfg, 2, 5);

    auto fresh = [&] {
        SposCheckpoint ck;
        for (size_t b = 0; b < cfg.blocks.size(); ++b) init_block_params(cfg, b, ck.params, 7);
        const Graph probe = build_shared_path_graph(cfg, archs[0], false);
        Rng init = Rng::derive(7, "probe-init");
        init_params(probe, ck.params, init);
        return ck;
    };
    SposCheckpoint a = fresh();
    SposCheckpoint b = fresh();
    for (const ArchEncoding& arch : archs) {
        const double acc = spos_predict(cfg, a, arch, val);
        EXPECT_GE(acc, 0.0);
        EXPECT_LE(acc, 1.0);
        EXPECT_EQ(acc, spos_predict(cfg, a, arch, val));
        EXPECT_EQ(acc, spos_predict(cfg, b, arch, val));
    }
}

TEST(Retrain, EpochCurveTracksBestAndFinal) {
    const SupernetConfig cfg = tiny_config();
    const Dataset train = tiny_dataset(31, 8);
    const Dataset val = tiny_dataset(32, 4);
    const ArchEncoding arch = sample_architectures(cfg, 1, 6)[0];

    FitConfig fc;
    fc.epochs = 3;
    fc.batch_size = 16;
    fc.seed = 13;
    const RetrainResult res = retrain_standalone(cfg, arch, train, val, fc);
    ASSERT_EQ(res.epoch_acc.size(), 3u);
    EXPECT_DOUBLE_EQ(res.final_acc, res.epoch_acc.back());
    EXPECT_DOUBLE_EQ(res.best_acc, *std::max_element(res.epoch_acc.begin(), res.epoch_acc.end()));
    for (double a : res.epoch_acc) {
        EXPECT_GE(a, 0.0);
        EXPECT_LE(a, 1.0);
    }

    const RetrainResult again = retrain_standalone(cfg, arch, train, val, fc);
    ASSERT_EQ(again.epoch_acc.size(), res.epoch_acc.size());
    for (size_t i = 0; i < res.epoch_acc.size(); ++i) EXPECT_EQ(again.epoch_acc[i], res.epoch_acc[i]);
}

TEST(Retrain, ZeroEpochsReportsUntrainedAccuracy) {
    const SupernetConfig cfg = tiny_config();
    const Dataset train = tiny_dataset(31, 8);
    const Dataset val = tiny_dataset(32, 4);
    const ArchEncoding arch = sample_architectures(cfg, 1, 6)[0];

    FitConfig fc;
    fc.epochs = 0;
    fc.seed = 13;
    const RetrainResult res = retrain_standalone(cfg, arch, train, val, fc);
    ASSERT_EQ(res.epoch_acc.size(), 1u);
    EXPECT_DOUBLE_EQ(res.best_acc, res.epoch_acc[0]);
    EXPECT_DOUBLE_EQ(res.final_acc, res.epoch_acc[0]);

    ArchEncoding bad = arch;
    bad[0].ops.push_back(0);
    EXPECT_THROW(retrain_standalone(cfg, bad, train, val, fc), ConfigError);
}

TEST(RankCorrelation, PerfectAndReversedOrders) {
    const std::vector<double> truth{0.1, 0.2, 0.3, 0.4, 0.5};
    const std::vector<double> fwd{1.0, 2.0, 3.0, 4.0, 5.0};
    std::vector<double> rev = fwd;
    std::reverse(rev.begin(), rev.end());

    RankCorrelation rc = rank_correlation(fwd, truth);
    EXPECT_DOUBLE_EQ(rc.kendall_tau, 1.0);
    EXPECT_DOUBLE_EQ(rc.spearman_rho, 1.0);
    rc = rank_correlation(rev, truth);
    EXPECT_DOUBLE_EQ(rc.kendall_tau, -1.0);
    EXPECT_DOUBLE_EQ(rc.spearman_rho, -1.0);
}

TEST(RankCorrelation, SingleSwapOracle) {
    // One discordant pair out of six: tau = (5-1)/6, rho = 1 - 6*2/(4*15).
    const RankCorrelation rc = rank_correlation({1.0, 2.0, 4.0, 3.0}, {1.0, 2.0, 3.0, 4.0});
    EXPECT_NEAR(rc.kendall_tau, 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(rc.spearman_rho, 0.8, 1e-12);
}

TEST(RankCorrelation, TiesUseTauBAndAverageRanks) {
    // Frozen against an independent statistics package: one tie in the
    // predictor, none in the truth.
    const RankCorrelation rc = rank_correlation({1.0, 1.0, 2.0, 3.0}, {1.0, 2.0, 3.0, 4.0});
    EXPECT_NEAR(rc.kendall_tau, 0.91287092917527701, 1e-12);
    EXPECT_NEAR(rc.spearman_rho, 0.94868329805051388, 1e-12);
}

TEST(RankCorrelation, PermutingPairsTogetherChangesNothing) {
    const std::vector<double> pred{0.4, 0.1, 0.9, 0.2, 0.7, 0.7};
    const std::vector<double> truth{0.35, 0.2, 0.8, 0.05, 0.9, 0.6};
    const RankCorrelation base = rank_correlation(pred, truth);

    const std::vector<size_t> perm{3, 0, 5, 1, 4, 2};
    std::vector<double> p2, t2;
    for (size_t i : perm) {
        p2.push_back(pred[i]);
        t2.push_back(truth[i]);
    }
    const RankCorrelation rc = rank_correlation(p2, t2);
    EXPECT_DOUBLE_EQ(rc.kendall_tau, base.kendall_tau);
    EXPECT_NEAR(rc.spearman_rho, base.spearman_rho, 1e-12);
}

TEST(RankCorrelation, RejectsDegenerateAndMalformedInput) {
    EXPECT_THROW(rank_correlation({1.0, 1.0, 1.0}, {1.0, 2.0, 3.0}), DegenerateTargetError);
    EXPECT_THROW(rank_correlation({1.0, 2.0, 3.0}, {5.0, 5.0, 5.0}), DegenerateTargetError);
    EXPECT_THROW(rank_correlation({1.0, 2.0}, {1.0}), ConfigError);
    EXPECT_THROW(rank_correlation({1.0}, {2.0}), ConfigError);
    EXPECT_THROW(rank_correlation({}, {}), ConfigError);
}

std::vector<BenchTrial> three_trials() {
    std::vector<BenchTrial> trials;
    const ArchEncoding archs[3] = {{{0, {1}}, {0, {0}}}, {{1, {0, 1}}, {0, {1}}}, {{0, {0}}, {1, {1, 0}}}};
    const double dna[3] = {-0.5, -0.25, -0.75};
    const double spos[3] = {0.3, 0.4, 0.2};
    const double acc[3] = {0.55, 0.7, 0.4};
    for (int i = 0; i < 3; ++i) {
        BenchTrial t;
        t.id = i;
        t.arch = archs[i];
        t.dna_score = dna[i];
        t.spos_score = spos[i];
        t.true_acc = acc[i];
        t.seed = 100 + uint64_t(i);
        trials.push_back(std::move(t));
    }
    return trials;
}

TEST(BenchReport, CorrelatesBothPredictorsAgainstTruth) {
    const auto trials = three_trials();
    const BenchReport rep = bench_report(trials);
    ASSERT_EQ(rep.trials.size(), 3u);
    // Both predictors order the trials exactly like the accuracies do.
    EXPECT_DOUBLE_EQ(rep.dna.kendall_tau, 1.0);
    EXPECT_DOUBLE_EQ(rep.dna.spearman_rho, 1.0);
    EXPECT_DOUBLE_EQ(rep.spos.kendall_tau, 1.0);
    EXPECT_DOUBLE_EQ(rep.spos.spearman_rho, 1.0);

    EXPECT_THROW(bench_report({trials[0], trials[1]}), ConfigError);
}

TEST(BenchReport, CsvRoundTripIsExact) {
    const auto trials = three_trials();
    const std::string csv = bench_to_csv(trials);
    EXPECT_EQ(parse_csv(csv)[0],
              (std::vector<std::string>{"arch_id", "encoding", "dna_score", "spos_score", "true_acc", "seed"}));

    const auto back = bench_from_csv(csv);
    ASSERT_EQ(back.size(), trials.size());
    for (size_t i = 0; i < trials.size(); ++i) {
        EXPECT_EQ(back[i].id, trials[i].id);
        EXPECT_EQ(arch_to_string(back[i].arch), arch_to_string(trials[i].arch));
        EXPECT_EQ(back[i].dna_score, trials[i].dna_score);
        EXPECT_EQ(back[i].spos_score, trials[i].spos_score);
        EXPECT_EQ(back[i].true_acc, trials[i].true_acc);
        EXPECT_EQ(back[i].seed, trials[i].seed);
    }
    EXPECT_THROW(bench_from_csv("h\nonly,two\n"), DataError);
}

TEST(BenchReport, TextSummaryNamesBothPredictors) {
    const BenchReport rep = bench_report(three_trials());
    const std::string text = bench_report_text(rep);
    EXPECT_NE(text.find("trials 3\n"), std::string::npos);
    EXPECT_NE(text.find("dna kendall_tau 1 spearman_rho 1\n"), std::string::npos);
    EXPECT_NE(text.find("spos kendall_tau 1 spearman_rho 1\n"), std::string::npos);
}

}  // namespace
