#include <gtest/gtest.h>

#include <algorithm>
#include <cstdint>
#include <vector>

#include "bnas/searcher.hpp"
#include "test_util.hpp"

using namespace bnas;

namespace {

// Hand-built search instances: each block gets synthetic loss-sorted records;
// the arch encoding doubles as an entry id via (cell, path).
struct Entry {
    double loss;
    int64_t cost;
};

struct Instance {
    SupernetConfig cfg;          // only blocks/ops arity matters here
    std::vector<PathRanking> rankings;
    CostTable table;
};

Instance make_instance(const std::vector<std::vector<Entry>>& blocks, int64_t stem = 0, int64_t head = 0) {
    Instance inst;
    inst.cfg.ops = {{3, 3, 0.25}, {3, 6, 0.25}};
    inst.table.stem = {stem, stem};
    inst.table.head = {head, head};
    for (size_t b = 0; b < blocks.size(); ++b) {
        BlockSpec blk;
        blk.stride = 1;
        blk.teacher_in_width = 4;
        blk.teacher_out_width = 4;
        blk.cells = {{1, 4}};
        inst.cfg.blocks.push_back(blk);

        PathRanking r;
        for (size_t e = 0; e < blocks[b].size(); ++e) {
            EvalRecord rec;
            rec.block = int(b);
            rec.cell = int(e);  // entry id; cells are synthetic here
            rec.path = {0};
            rec.loss = blocks[b][e].loss;
            rec.params = blocks[b][e].cost;
            rec.madds = blocks[b][e].cost * 10;
            r.records.push_back(rec);
        }
        std::sort(r.records.begin(), r.records.end(), eval_record_less);
        inst.rankings.push_back(std::move(r));
    }
    return inst;
}

Constraint params_bound(int64_t bound) {
    Constraint c;
    c.metric = CostMetric::params;
    c.bound = bound;
    c.active = true;
    return c;
}

}  // namespace

TEST(Searcher, WorkedTwoBlockExample) {
    // Block 1: entries (loss .1, cost 5), (.2, 3). Block 2: (.1, 4), (.3, 1).
    // Budget 8: the all-best model costs 9, so the search settles on the
    // cheap block-1 entry plus the best block-2 entry: loss .3, cost 7.
    Instance inst = make_instance({{{0.1, 5}, {0.2, 3}}, {{0.1, 4}, {0.3, 1}}});

    const SearchResult top = traversal_search(inst.cfg, inst.rankings, inst.table, {});
    EXPECT_DOUBLE_EQ(top.loss, 0.2);
    EXPECT_EQ(top.cost.params, 9);
    EXPECT_EQ(top.proof, "exact");

    const SearchResult bounded = traversal_search(inst.cfg, inst.rankings, inst.table, params_bound(8));
    EXPECT_DOUBLE_EQ(bounded.loss, 0.30000000000000004);  // 0.2 + 0.1
    EXPECT_EQ(bounded.cost.params, 7);
    ASSERT_EQ(bounded.arch.size(), 2u);
    EXPECT_EQ(bounded.arch[0].cell, 1);  // the cheap block-1 entry
    EXPECT_EQ(bounded.arch[1].cell, 0);

    EXPECT_THROW(traversal_search(inst.cfg, inst.rankings, inst.table, params_bound(3)), NoFeasibleModelError);
}

TEST(Searcher, StemAndHeadCountAgainstTheBudget) {
    Instance inst = make_instance({{{0.1, 5}, {0.2, 3}}, {{0.1, 4}, {0.3, 1}}}, 2, 1);
    // Same instance as above shifted by 3 fixed units.
    const SearchResult bounded = traversal_search(inst.cfg, inst.rankings, inst.table, params_bound(11));
    EXPECT_EQ(bounded.cost.params, 10);
    EXPECT_DOUBLE_EQ(bounded.loss, 0.30000000000000004);
    // A budget below the fixed cost plus the cheapest blocks is infeasible.
    EXPECT_THROW(traversal_search(inst.cfg, inst.rankings, inst.table, params_bound(6)), NoFeasibleModelError);
}

TEST(Searcher, UnconstrainedPicksPerBlockMinima) {
    Instance inst = make_instance({{{0.5, 9}, {0.6, 1}}, {{0.05, 2}, {0.9, 1}}, {{0.2, 4}}});
    const SearchResult top = traversal_search(inst.cfg, inst.rankings, inst.table, {});
    EXPECT_DOUBLE_EQ(top.loss, 0.75);
    EXPECT_EQ(top.cost.params, 15);
    EXPECT_EQ(top.visited, 3);  // loss-sorted heads only, suffix bound cuts the rest
}

TEST(Searcher, TieBreaksPreferCheaperThenLexicographic) {
    // Two equal-loss optima; the cheaper one must win even though the pruning
    // bound sees an equal-loss incumbent first.
    Instance inst = make_instance({{{0.2, 5}, {0.2, 2}}, {{0.1, 1}}});
    const SearchResult top = traversal_search(inst.cfg, inst.rankings, inst.table, {});
    EXPECT_DOUBLE_EQ(top.loss, 0.30000000000000004);
    EXPECT_EQ(top.cost.params, 3);
    EXPECT_EQ(top.arch[0].cell, 1);

    const SearchResult brute = brute_force_search(inst.cfg, inst.rankings, inst.table, {});
    EXPECT_EQ(brute.arch[0].cell, top.arch[0].cell);
    EXPECT_EQ(brute.cost.params, top.cost.params);

    // Equal loss and equal active cost: the lexicographically smaller
    // encoding wins. madds = 10x params breaks nothing here since the entry
    // ids differ only in the cell field.
    Instance lex = make_instance({{{0.2, 5}, {0.2, 5}}, {{0.1, 1}}});
    const SearchResult t2 = traversal_search(lex.cfg, lex.rankings, lex.table, {});
    const SearchResult b2 = brute_force_search(lex.cfg, lex.rankings, lex.table, {});
    EXPECT_EQ(t2.arch[0].cell, 0);
    EXPECT_EQ(b2.arch[0].cell, 0);
}

TEST(Searcher, LambdaWeightsFlipTheConstrainedChoice) {
    // Budget 6 forces a sacrifice in exactly one block: take the good entry
    // (loss .1, cost 5) in one block and the weak one (.3, 1) in the other.
    Instance inst = make_instance({{{0.1, 5}, {0.3, 1}}, {{0.1, 5}, {0.3, 1}}});
    const Constraint c = params_bound(6);

    // Unweighted the two compromises tie; lex on the encoding favors
    // sacrificing block 2.
    const SearchResult plain = traversal_search(inst.cfg, inst.rankings, inst.table, c);
    EXPECT_EQ(plain.arch[0].cell, 0);
    EXPECT_EQ(plain.arch[1].cell, 1);

    // A heavy block-2 weight makes its loss precious: sacrifice block 1.
    inst.cfg.lambda = {1.0, 3.0};
    const SearchResult weighted = traversal_search(inst.cfg, inst.rankings, inst.table, c);
    EXPECT_EQ(weighted.arch[0].cell, 1);
    EXPECT_EQ(weighted.arch[1].cell, 0);
    EXPECT_DOUBLE_EQ(weighted.loss, 1.0 * 0.3 + 3.0 * 0.1);
    const SearchResult brute = brute_force_search(inst.cfg, inst.rankings, inst.table, c);
    EXPECT_EQ(brute.arch[0].cell, weighted.arch[0].cell);
    EXPECT_EQ(brute.arch[1].cell, weighted.arch[1].cell);
    EXPECT_EQ(brute.loss, weighted.loss);
}

TEST(Searcher, InputValidation) {
    Instance inst = make_instance({{{0.1, 1}}, {{0.2, 1}}});
    std::vector<PathRanking> missing = {inst.rankings[0]};
    EXPECT_THROW(traversal_search(inst.cfg, missing, inst.table, {}), ConfigError);
    std::vector<PathRanking> empty = inst.rankings;
    empty[1].records.clear();
    EXPECT_THROW(traversal_search(inst.cfg, empty, inst.table, {}), ConfigError);
    EXPECT_THROW(brute_force_search(inst.cfg, missing, inst.table, {}), ConfigError);
}

TEST(Searcher, BruteForceCapTrips) {
    // 40^5 combinations exceed a cap of 10^7.
    std::vector<std::vector<Entry>> blocks(5);
    for (auto& b : blocks)
        for (int e = 0; e < 40; ++e) b.push_back({0.001 * e, e + 1});
    Instance inst = make_instance(blocks);
    EXPECT_THROW(brute_force_search(inst.cfg, inst.rankings, inst.table, {}, 10'000'000), OverflowError);
}

TEST(Searcher, MatchesBruteForceOnSeededInstances) {
    // 100 random instances; mixed feasible and infeasible bounds. The
    // traversal must agree with exhaustive enumeration bit for bit and must
    // expand fewer entries than the brute-force combination count.
    int infeasible_seen = 0;
    for (uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng = Rng::derive(seed, "search-instance");
        const size_t nblocks = 1 + rng.uniform_int(4);
        std::vector<std::vector<Entry>> blocks(nblocks);
        int64_t min_total = 0, max_total = 0;
        int64_t combos = 1;
        for (auto& b : blocks) {
            const size_t entries = 2 + rng.uniform_int(49);  // >=2 so visited < combos is meaningful
            int64_t bmin = INT64_MAX, bmax = 0;
            for (size_t e = 0; e < entries; ++e) {
                const double loss = rng.uniform();
                const int64_t cost = 1 + int64_t(rng.uniform_int(100));
                b.push_back({loss, cost});
                bmin = std::min(bmin, cost);
                bmax = std::max(bmax, cost);
            }
            min_total += bmin;
            max_total += bmax;
            combos *= int64_t(entries);
        }
        Instance inst = make_instance(blocks, int64_t(rng.uniform_int(5)), int64_t(rng.uniform_int(5)));
        const int64_t fixed = inst.table.stem.params + inst.table.head.params;

        Constraint c;
        if (seed % 4 != 0) {
            c = params_bound(fixed + min_total + int64_t(rng.uniform_int(uint64_t(max_total - min_total + 2))));
            if (seed % 8 == 1) c.bound = fixed + min_total - 1 - int64_t(rng.uniform_int(3));  // infeasible
        }

        SearchResult trav, brute;
        bool trav_threw = false, brute_threw = false;
        try {
            trav = traversal_search(inst.cfg, inst.rankings, inst.table, c);
        } catch (const NoFeasibleModelError&) {
            trav_threw = true;
        }
        try {
            brute = brute_force_search(inst.cfg, inst.rankings, inst.table, c);
        } catch (const NoFeasibleModelError&) {
            brute_threw = true;
        }
        ASSERT_EQ(trav_threw, brute_threw) << "seed " << seed;
        if (trav_threw) {
            infeasible_seen += 1;
            continue;
        }
        EXPECT_EQ(trav.loss, brute.loss) << "seed " << seed;
        EXPECT_EQ(trav.cost.params, brute.cost.params) << "seed " << seed;
        EXPECT_EQ(trav.cost.madds, brute.cost.madds) << "seed " << seed;
        ASSERT_EQ(trav.arch.size(), brute.arch.size()) << "seed " << seed;
        for (size_t b = 0; b < trav.arch.size(); ++b) {
            EXPECT_EQ(trav.arch[b].cell, brute.arch[b].cell) << "seed " << seed;
            EXPECT_EQ(trav.arch[b].ops, brute.arch[b].ops) << "seed " << seed;
        }
        EXPECT_LT(trav.visited, combos) << "seed " << seed;
    }
    EXPECT_GT(infeasible_seen, 0);  // the sweep exercised the infeasible path
}

TEST(Searcher, ParetoSweepIsMonotoneAndMarksInfeasible) {
    Instance inst = make_instance({{{0.1, 5}, {0.2, 3}}, {{0.1, 4}, {0.3, 1}}});
    const auto sweep = pareto_sweep(inst.cfg, inst.rankings, inst.table, CostMetric::params,
                                    {12, 4, 8, 9, 3});
    ASSERT_EQ(sweep.size(), 5u);
    // Bounds come back sorted ascending.
    EXPECT_EQ(sweep[0].first, 3);
    EXPECT_FALSE(sweep[0].second.has_value());
    EXPECT_EQ(sweep[1].first, 4);
    ASSERT_TRUE(sweep[1].second.has_value());
    EXPECT_DOUBLE_EQ(sweep[1].second->loss, 0.5);  // cheapest feasible model
    ASSERT_TRUE(sweep[2].second.has_value());
    EXPECT_DOUBLE_EQ(sweep[2].second->loss, 0.30000000000000004);
    ASSERT_TRUE(sweep[3].second.has_value());
    EXPECT_DOUBLE_EQ(sweep[3].second->loss, 0.2);
    EXPECT_DOUBLE_EQ(sweep[4].second->loss, 0.2);
    // Larger budget never hurts.
    double prev = 1e9;
    for (const auto& [bound, res] : sweep)
        if (res) {
            EXPECT_LE(res->loss, prev);
            prev = res->loss;
        }
}

TEST(Searcher, MetricNamesRoundTrip) {
    EXPECT_EQ(parse_cost_metric("params"), CostMetric::params);
    EXPECT_EQ(parse_cost_metric("madds"), CostMetric::madds);
    EXPECT_THROW(parse_cost_metric("latency"), ConfigError);
    EXPECT_EQ(std::string(cost_metric_name(CostMetric::madds)), "madds");
}

TEST(Searcher, MaddsConstraintUsesItsOwnColumn) {
    Instance inst = make_instance({{{0.1, 5}, {0.2, 3}}, {{0.1, 4}, {0.3, 1}}});
    Constraint c;
    c.metric = CostMetric::madds;
    c.bound = 70;  // madds are 10x params in these instances
    c.active = true;
    const SearchResult r = traversal_search(inst.cfg, inst.rankings, inst.table, c);
    EXPECT_EQ(r.cost.madds, 70);
    EXPECT_DOUBLE_EQ(r.loss, 0.30000000000000004);
}
