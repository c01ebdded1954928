#include <gtest/gtest.h>

#include <string>
#include <vector>

#include "bnas/distill.hpp"
#include "bnas/serialize.hpp"
#include "bnas/teacher.hpp"
#include "test_util.hpp"

using namespace bnas;

namespace {

struct Fixture {
    SupernetConfig cfg = bnas_test::tiny_config();
    FeatureCache cache;
    DistillConfig dc;

    Fixture() {
        TeacherModel t = make_teacher(cfg);  // mimicry only needs fixed targets
        const Dataset full = bnas_test::tiny_dataset(cfg.seed, 6);
        auto [train, val] = split_holdout(full, 0.25, cfg.seed, "train", "val");
        cache = extract_features(t, {{"train", &train}, {"val", &val}}, 8);
        dc.epochs_per_cell = 1;
        dc.batch_size = 9;
        dc.seed = cfg.seed;
    }
};

const Fixture& fixture() {
    static Fixture f;
    return f;
}

std::string block_bytes(const BlockCheckpoint& ck) {
    return container_to_bytes(ck.params.to_container());
}

}  // namespace

TEST(Distill, SampledPathsAreInRangeAndSeeded) {
    Rng a = Rng::derive(5, "path-sample", 0);
    Rng b = Rng::derive(5, "path-sample", 0);
    const auto p1 = sample_path(4, 3, a);
    const auto p2 = sample_path(4, 3, b);
    EXPECT_EQ(p1, p2);
    ASSERT_EQ(p1.size(), 4u);
    for (int op : p1) {
        EXPECT_GE(op, 0);
        EXPECT_LT(op, 3);
    }
}

TEST(Distill, StrategyNamesRoundTrip) {
    for (auto s : {Strategy::dna, Strategy::s1, Strategy::s2})
        EXPECT_EQ(parse_strategy(strategy_name(s)), s);
    EXPECT_THROW(parse_strategy("s3"), ConfigError);
}

TEST(Distill, BlockTrainingIsBitDeterministic) {
    const Fixture& f = fixture();
    const BlockCheckpoint a = train_block(f.cfg, 0, f.cache, f.dc);
    const BlockCheckpoint b = train_block(f.cfg, 0, f.cache, f.dc);
    EXPECT_EQ(block_bytes(a), block_bytes(b));
    ASSERT_EQ(a.curve.size(), b.curve.size());
    for (size_t i = 0; i < a.curve.size(); ++i) EXPECT_EQ(a.curve[i].loss, b.curve[i].loss);
}

TEST(Distill, CurveAccountsEveryCellStep) {
    const Fixture& f = fixture();
    DistillConfig dc = f.dc;
    dc.epochs_per_cell = 2;
    const BlockCheckpoint ck = train_block(f.cfg, 1, f.cache, dc);
    const int64_t n = f.cache.split("train").input.shape[0];  // 18 rows
    const int64_t batches = (n + dc.batch_size - 1) / dc.batch_size;
    const size_t cells = f.cfg.blocks[1].cells.size();
    EXPECT_EQ(ck.curve.size(), size_t(dc.epochs_per_cell) * size_t(batches) * cells);
    EXPECT_EQ(ck.epochs, 2);
    for (const LossPoint& p : ck.curve) {
        EXPECT_GE(p.loss, 0.0);
        EXPECT_LT(p.cell, int(cells));
    }
}

TEST(Distill, ZeroEpochsLeavesInitUntouched) {
    const Fixture& f = fixture();
    DistillConfig dc = f.dc;
    dc.epochs_per_cell = 0;
    const BlockCheckpoint ck = train_block(f.cfg, 0, f.cache, dc);
    ParameterSet<float> init;
    init_block_params(f.cfg, 0, init, dc.seed);
    EXPECT_EQ(block_bytes(ck), container_to_bytes(init.to_container()));
    EXPECT_TRUE(ck.curve.empty());
}

TEST(Distill, BlocksAreIndependentAcrossOrderAndThreads) {
    const Fixture& f = fixture();
    const auto seq = train_all_blocks(f.cfg, f.cache, f.dc, false);
    const auto par = train_all_blocks(f.cfg, f.cache, f.dc, true);
    // Reverse order, one block at a time.
    std::vector<BlockCheckpoint> rev(2);
    rev[1] = train_block(f.cfg, 1, f.cache, f.dc);
    rev[0] = train_block(f.cfg, 0, f.cache, f.dc);

    ASSERT_EQ(seq.size(), 2u);
    ASSERT_EQ(par.size(), 2u);
    for (size_t b = 0; b < 2; ++b) {
        EXPECT_EQ(block_bytes(seq[b]), block_bytes(par[b])) << "block " << b;
        EXPECT_EQ(block_bytes(seq[b]), block_bytes(rev[b])) << "block " << b;
    }
}

TEST(Distill, StrategyDispatchIsStrict) {
    const Fixture& f = fixture();
    DistillConfig s1 = f.dc;
    s1.strategy = Strategy::s1;
    EXPECT_THROW(train_block(f.cfg, 0, f.cache, s1), ConfigError);
    DistillConfig dna = f.dc;
    EXPECT_THROW(train_blocks_sequential(f.cfg, f.cache, dna, 1), ConfigError);
    EXPECT_THROW(train_blocks_sequential(f.cfg, f.cache, s1, 0), ConfigError);
    EXPECT_THROW(train_blocks_sequential(f.cfg, f.cache, s1, 99), ConfigError);
}

TEST(Distill, SequentialStageOneMatchesParallelBlockOne) {
    const Fixture& f = fixture();
    const BlockCheckpoint dna0 = train_block(f.cfg, 0, f.cache, f.dc);
    for (Strategy s : {Strategy::s1, Strategy::s2}) {
        DistillConfig dc = f.dc;
        dc.strategy = s;
        const auto stages = train_blocks_sequential(f.cfg, f.cache, dc, 1);
        ASSERT_EQ(stages.size(), 1u);
        EXPECT_EQ(block_bytes(stages[0]), block_bytes(dna0)) << strategy_name(s);
    }
}

TEST(Distill, SecondStageDiffersFromParallelSecondBlock) {
    // The sequential strategies feed student features into block 2, so their
    // stage-2 weights must not match the teacher-fed parallel result.
    const Fixture& f = fixture();
    const BlockCheckpoint dna1 = train_block(f.cfg, 1, f.cache, f.dc);
    for (Strategy s : {Strategy::s1, Strategy::s2}) {
        DistillConfig dc = f.dc;
        dc.strategy = s;
        const auto stages = train_blocks_sequential(f.cfg, f.cache, dc, 2);
        ASSERT_EQ(stages.size(), 2u);
        EXPECT_NE(block_bytes(stages[1]), block_bytes(dna1)) << strategy_name(s);
    }
}

TEST(Distill, FrozenStagesStayBitIdentical) {
    const Fixture& f = fixture();
    DistillConfig dc = f.dc;
    dc.strategy = Strategy::s2;
    const auto one = train_blocks_sequential(f.cfg, f.cache, dc, 1);
    const auto two = train_blocks_sequential(f.cfg, f.cache, dc, 2);
    EXPECT_EQ(block_bytes(one[0]), block_bytes(two[0]));
}

TEST(Distill, CurveCsvRoundsTrips) {
    const Fixture& f = fixture();
    const BlockCheckpoint ck = train_block(f.cfg, 0, f.cache, f.dc);
    const std::string csv = curve_to_csv(ck.curve);
    const auto rows = parse_csv(csv);
    ASSERT_EQ(rows.size(), ck.curve.size() + 1);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"epoch", "step", "cell", "loss"}));
    EXPECT_EQ(std::stod(rows[1][3]), ck.curve[0].loss);
}

TEST(Spos, BudgetMatchesSummedCellEpochs) {
    const Fixture& f = fixture();
    const Dataset full = bnas_test::tiny_dataset(f.cfg.seed, 6);
    auto [train, val] = split_holdout(full, 0.25, f.cfg.seed, "train", "val");
    DistillConfig dc = f.dc;
    dc.epochs_per_cell = 1;
    const SposCheckpoint a = train_spos_baseline(f.cfg, train, dc);
    EXPECT_EQ(a.total_epochs, 4);  // (2 + 2 cells) x 1 epoch
    const SposCheckpoint b = train_spos_baseline(f.cfg, train, dc);
    EXPECT_EQ(container_to_bytes(a.params.to_container()), container_to_bytes(b.params.to_container()));
    EXPECT_FALSE(a.curve.empty());
}
