#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "bnas/search_space.hpp"
#include "test_util.hpp"

using namespace bnas;

TEST(SearchSpace, EnumeratePathsIsLexicographicAndComplete) {
    CellSpec cell;
    cell.depth = 2;
    const auto paths = enumerate_paths(cell, 3);
    ASSERT_EQ(paths.size(), 9u);
    EXPECT_EQ(paths.front(), (std::vector<int>{0, 0}));
    EXPECT_EQ(paths[1], (std::vector<int>{0, 1}));
    EXPECT_EQ(paths[3], (std::vector<int>{1, 0}));
    EXPECT_EQ(paths.back(), (std::vector<int>{2, 2}));
    std::set<std::vector<int>> uniq(paths.begin(), paths.end());
    EXPECT_EQ(uniq.size(), paths.size());
    for (size_t i = 1; i < paths.size(); ++i) EXPECT_LT(paths[i - 1], paths[i]);

    cell.depth = 30;  // 3^30 blows the enumeration cap
    EXPECT_THROW(enumerate_paths(cell, 3), OverflowError);
}

TEST(SearchSpace, FiveLayerSixOpCellHas7776Paths) {
    CellSpec cell;
    cell.depth = 5;
    EXPECT_EQ(enumerate_paths(cell, 6).size(), 7776u);
}

TEST(SearchSpace, BlockAndTotalSizeMatchBruteEnumeration) {
    const SupernetConfig cfg = bnas_test::tiny_config();
    // Brute force: walk every (cell, path) combination per block and count.
    int64_t brute_total = 1;
    for (size_t b = 0; b < cfg.blocks.size(); ++b) {
        int64_t block_count = 0;
        for (const CellSpec& cell : cfg.blocks[b].cells)
            block_count += int64_t(enumerate_paths(cell, int(cfg.ops.size())).size());
        EXPECT_EQ(block_space_size(cfg.blocks[b], int(cfg.ops.size())), BigInt(block_count));
        brute_total *= block_count;
    }
    EXPECT_EQ(space_size(cfg), BigInt(brute_total));
    EXPECT_EQ(brute_total, 36);  // (2 + 4) * (2 + 4)
}

TEST(SearchSpace, DeskConfigSize) {
    const SupernetConfig cfg = desk_config();
    validate_config(cfg);
    // Per block: 4^2 + 4^3 = 80; three blocks.
    for (size_t b = 0; b < cfg.blocks.size(); ++b)
        EXPECT_EQ(block_space_size(cfg.blocks[b], int(cfg.ops.size())), BigInt(80));
    EXPECT_EQ(space_size(cfg), BigInt(512000));
    EXPECT_EQ(drop_rate(cfg, 0), BigRat(80, 512000));
    EXPECT_EQ(drop_rate(cfg, 0), BigRat(1, 6400));
}

TEST(SearchSpace, ReferenceConfigSizeAgainstIndependentProduct) {
    const SupernetConfig cfg = reference_config();
    validate_config(cfg);
    ASSERT_EQ(cfg.blocks.size(), 6u);
    ASSERT_EQ(cfg.ops.size(), 6u);

    // Independent oracle: per-block sums of C^depth in plain int64 arithmetic.
    int64_t expect_total = 1;
    for (const BlockSpec& blk : cfg.blocks) {
        int64_t sum = 0;
        for (const CellSpec& cell : blk.cells) {
            int64_t p = 1;
            for (int i = 0; i < cell.depth; ++i) p *= int64_t(cfg.ops.size());
            sum += p;
        }
        expect_total *= sum;
    }
    const BigInt total = space_size(cfg);
    EXPECT_EQ(total, BigInt(expect_total));
    EXPECT_EQ(total, BigInt("195898498887057408"));  // frozen external computation

    // One significant figure: ~2e17.
    const double approx = static_cast<double>(total);
    EXPECT_NEAR(approx / 1e17, 2.0, 0.5);

    // Last block's share of the space is about 3e-17.
    const BigRat dr = drop_rate(cfg, cfg.blocks.size() - 1);
    const double drd = static_cast<double>(numerator(dr)) / static_cast<double>(denominator(dr));
    EXPECT_GT(drd, 1e-17);
    EXPECT_LT(drd, 1e-16);
}

TEST(SearchSpace, DropRatesSumOverBlocksStaysTiny) {
    const SupernetConfig cfg = desk_config();
    BigRat sum = 0;
    for (size_t b = 0; b < cfg.blocks.size(); ++b) sum += drop_rate(cfg, b);
    EXPECT_EQ(sum, BigRat(3, 6400));
    EXPECT_THROW(drop_rate(cfg, 99), ConfigError);
}

TEST(SearchSpace, ValidateConfigCatchesBadSetups) {
    SupernetConfig cfg = bnas_test::tiny_config();
    EXPECT_NO_THROW(validate_config(cfg));

    SupernetConfig no_ops = cfg;
    no_ops.ops.clear();
    EXPECT_THROW(validate_config(no_ops), ConfigError);

    SupernetConfig no_blocks = cfg;
    no_blocks.blocks.clear();
    EXPECT_THROW(validate_config(no_blocks), ConfigError);

    SupernetConfig bad_chain = cfg;
    bad_chain.blocks[1].teacher_in_width = 99;  // must equal previous out width
    EXPECT_THROW(validate_config(bad_chain), ConfigError);

    SupernetConfig bad_depth = cfg;
    bad_depth.blocks[0].cells[0].depth = 0;
    EXPECT_THROW(validate_config(bad_depth), ConfigError);

    SupernetConfig bad_lambda = cfg;
    bad_lambda.lambda = {1.0};  // wrong arity
    EXPECT_THROW(validate_config(bad_lambda), ConfigError);
}

TEST(SearchSpace, EncodingValidation) {
    const SupernetConfig cfg = bnas_test::tiny_config();
    ArchEncoding good = {{0, {1}}, {1, {0, 1}}};
    EXPECT_NO_THROW(validate_encoding(cfg, good));

    ArchEncoding short_arch = {{0, {1}}};
    EXPECT_THROW(validate_encoding(cfg, short_arch), ConfigError);

    ArchEncoding bad_cell = {{5, {1}}, {1, {0, 1}}};
    EXPECT_THROW(validate_encoding(cfg, bad_cell), ConfigError);

    ArchEncoding bad_depth = {{0, {1, 0}}, {1, {0, 1}}};
    EXPECT_THROW(validate_encoding(cfg, bad_depth), ConfigError);

    ArchEncoding bad_op = {{0, {2}}, {1, {0, 1}}};
    EXPECT_THROW(validate_encoding(cfg, bad_op), ConfigError);
}

TEST(SearchSpace, ArchStringRoundTrip) {
    ArchEncoding arch = {{0, {1}}, {1, {0, 1}}};
    const std::string s = arch_to_string(arch);
    EXPECT_EQ(s, "c0:1/c1:0.1");
    const ArchEncoding back = arch_from_string(s);
    ASSERT_EQ(back.size(), arch.size());
    for (size_t b = 0; b < arch.size(); ++b) {
        EXPECT_EQ(back[b].cell, arch[b].cell);
        EXPECT_EQ(back[b].ops, arch[b].ops);
    }
    EXPECT_THROW(arch_from_string(""), ConfigError);
    EXPECT_THROW(arch_from_string("x0:1"), ConfigError);
    EXPECT_THROW(arch_from_string("c0"), ConfigError);
    EXPECT_THROW(arch_from_string("c0:"), ConfigError);
    EXPECT_THROW(arch_from_string("c0:a.b"), ConfigError);
}

TEST(SearchSpace, BlockLambdaDefaultsToOne) {
    SupernetConfig cfg = bnas_test::tiny_config();
    EXPECT_DOUBLE_EQ(block_lambda(cfg, 0), 1.0);
    cfg.lambda = {0.5, 2.0};
    EXPECT_DOUBLE_EQ(block_lambda(cfg, 0), 0.5);
    EXPECT_DOUBLE_EQ(block_lambda(cfg, 1), 2.0);
}

TEST(SearchSpace, BlockOutSizesFollowStrides) {
    const SupernetConfig cfg = bnas_test::tiny_config();
    const auto sizes = block_out_sizes(cfg);
    ASSERT_EQ(sizes.size(), 3u);
    EXPECT_EQ(sizes[0], 16);  // prelude keeps resolution
    EXPECT_EQ(sizes[1], 8);
    EXPECT_EQ(sizes[2], 4);
}
