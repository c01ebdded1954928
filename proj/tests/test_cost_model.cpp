#include <gtest/gtest.h>

#include <vector>

#include "bnas/bench.hpp"
#include "bnas/cost_model.hpp"
#include "bnas/model_builder.hpp"
#include "test_util.hpp"

using namespace bnas;

namespace {

// One mbconv op as its own graph, with a concrete input resolution.
Cost counted_op_cost(const OpSpec& op, int in_w, int out_w, int64_t sp, int stride) {
    Graph g;
    LayerDims dims{in_w, out_w, stride};
    int x = g.add_input("x", {1, in_w, sp, sp});
    append_mbconv(g, "probe", dims, op, x);
    return graph_cost(g, {{1, in_w, sp, sp}});
}

}  // namespace

TEST(CostModel, ClosedFormMatchesGraphCountingPerOp) {
    const std::vector<OpSpec> ops = {{3, 3, 0.25}, {3, 6, 0.25}, {5, 3, 0.25}, {5, 6, 0.25}, {7, 3, 0.25}};
    const std::vector<std::tuple<int, int, int64_t, int>> dims = {
        {8, 16, 16, 2},  // stride-2 block entry
        {16, 16, 8, 1},  // residual case: same width, stride 1
        {16, 32, 8, 1},  // projection without residual
        {6, 4, 5, 1},    // odd spatial size
        {3, 8, 7, 2},
    };
    for (const OpSpec& op : ops)
        for (const auto& [in_w, out_w, sp, stride] : dims) {
            const Cost closed = op_cost(op, in_w, out_w, sp, stride);
            const Cost counted = counted_op_cost(op, in_w, out_w, sp, stride);
            EXPECT_EQ(closed, counted) << "k" << op.kernel << "e" << op.expansion << " in" << in_w << " out"
                                       << out_w << " sp" << sp << " s" << stride;
        }
    EXPECT_THROW(op_cost(ops[0], 0, 4, 8, 1), ConfigError);
}

TEST(CostModel, CostsScaleSensibly) {
    const Cost e3 = op_cost({3, 3, 0.25}, 16, 16, 8, 1);
    const Cost e6 = op_cost({3, 6, 0.25}, 16, 16, 8, 1);
    const Cost k5 = op_cost({5, 3, 0.25}, 16, 16, 8, 1);
    EXPECT_GT(e6.params, e3.params);
    EXPECT_GT(e6.madds, e3.madds);
    EXPECT_GT(k5.params, e3.params);  // bigger depthwise kernel
    EXPECT_GT(k5.madds, e3.madds);
}

TEST(CostModel, TableCoversEveryBlockCellLayerOp) {
    const SupernetConfig cfg = bnas_test::tiny_config();
    const CostTable t = build_cost_table(cfg);
    size_t expect = 0;
    for (const BlockSpec& b : cfg.blocks)
        for (const CellSpec& c : b.cells) expect += size_t(c.depth) * cfg.ops.size();
    EXPECT_EQ(t.entries.size(), expect);
    EXPECT_EQ(expect, 12u);
    EXPECT_GT(t.stem.params, 0);
    EXPECT_GT(t.head.params, 0);
    EXPECT_NO_THROW(t.at(0, 0, 0, 0));
    EXPECT_THROW(t.at(0, 0, 0, 9), ConfigError);
    EXPECT_THROW(t.at(5, 0, 0, 0), ConfigError);
}

TEST(CostModel, TableRequiresOneWidthPerBlock) {
    SupernetConfig cfg = bnas_test::tiny_config();
    cfg.blocks[0].cells[1].width = cfg.blocks[0].cells[0].width + 2;
    EXPECT_THROW(build_cost_table(cfg), ConfigError);
}

TEST(CostModel, ModelCostMatchesAssembledGraphExactly) {
    for (const SupernetConfig& cfg : {bnas_test::tiny_config(), desk_config()}) {
        const CostTable t = build_cost_table(cfg);
        const auto archs = sample_architectures(cfg, 25, 77);
        const Shape in{1, cfg.input_channels, cfg.input_size, cfg.input_size};
        for (const ArchEncoding& arch : archs) {
            const Cost tabled = model_cost(t, arch);
            const Cost counted = graph_cost(build_standalone(cfg, arch, false), {in});
            EXPECT_EQ(tabled, counted) << arch_to_string(arch);
        }
    }
}

TEST(CostModel, StemAndHeadAreArchIndependent) {
    const SupernetConfig cfg = bnas_test::tiny_config();
    const CostTable t = build_cost_table(cfg);
    // Two archs sharing every block choice except ops differ by op deltas only.
    const ArchEncoding a = {{0, {0}}, {0, {0}}};
    const ArchEncoding b = {{0, {1}}, {0, {0}}};
    const Cost ca = model_cost(t, a);
    const Cost cb = model_cost(t, b);
    const Cost oa = t.at(0, 0, 0, 0);
    const Cost ob = t.at(0, 0, 0, 1);
    EXPECT_EQ(cb.params - ca.params, ob.params - oa.params);
    EXPECT_EQ(cb.madds - ca.madds, ob.madds - oa.madds);
}
