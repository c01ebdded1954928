// End-to-end walkthrough at toy scale: train a teacher on synthetic data,
// distill every block's cells against its features, rank all paths per
// block, then search the cross-block space with and without a parameter
// budget. Runs in about a minute on one core.

#include <cstdio>

#include "bnas/bench.hpp"
#include "bnas/distill.hpp"
#include "bnas/evaluator.hpp"
#include "bnas/searcher.hpp"
#include "bnas/teacher.hpp"

using namespace bnas;

namespace {

SupernetConfig toy_config() {
    SupernetConfig cfg;
    cfg.input_size = 16;
    cfg.input_channels = 3;
    cfg.stem_width = 6;
    cfg.num_classes = 4;
    cfg.seed = 3;
    cfg.ops = {{3, 3, 0.25}, {3, 6, 0.25}};
    BlockSpec b1;
    b1.stride = 2;
    b1.teacher_in_width = 6;
    b1.teacher_out_width = 8;
    b1.cells = {{1, 4}, {2, 4}};
    BlockSpec b2;
    b2.stride = 2;
    b2.teacher_in_width = 8;
    b2.teacher_out_width = 12;
    b2.cells = {{1, 6}, {2, 6}};
    cfg.blocks = {b1, b2};
    return cfg;
}

void show(const char* tag, const SearchResult& r) {
    std::printf("%-13s %s  loss %.4f  params %lld  madds %lld  visited %lld\n", tag,
                arch_to_string(r.arch).c_str(), r.loss, static_cast<long long>(r.cost.params),
                static_cast<long long>(r.cost.madds), static_cast<long long>(r.visited));
}

}  // namespace

int main() {
    const SupernetConfig cfg = toy_config();
    std::printf("search space holds %s models\n", space_size(cfg).str().c_str());

    SyntheticSpec spec;
    spec.class_count = cfg.num_classes;
    spec.images_per_class = 24;
    spec.size = cfg.input_size;
    spec.noise = 0.5;
    const Dataset full = gen_synthetic(cfg.seed, spec);
    const auto [train, val] = split_holdout(full, 0.25, cfg.seed, "train", "val");

    TeacherTrainConfig tc;
    tc.fit.epochs = 30;
    tc.fit.batch_size = 24;
    tc.fit.seed = cfg.seed;
    tc.accuracy_floor = 0.0;
    TeacherModel teacher = train_teacher(cfg, train, val, tc);
    std::printf("teacher val accuracy %.3f\n",
                evaluate_accuracy(teacher.eval_layout.graph, teacher.params, val));

    const FeatureCache cache = extract_features(teacher, {{"train", &train}, {"val", &val}});

    DistillConfig dc;
    dc.epochs_per_cell = 6;
    dc.batch_size = 24;
    dc.seed = cfg.seed;
    std::vector<BlockCheckpoint> blocks = train_all_blocks(cfg, cache, dc, true);

    const CostTable table = build_cost_table(cfg);
    std::vector<PathRanking> rankings;
    for (size_t b = 0; b < cfg.blocks.size(); ++b) {
        rankings.push_back(rank_block(cfg, b, blocks[b], cache, table, nullptr, dc.batch_size));
        const EvalRecord& top = rankings.back().records.front();
        std::printf("block %zu best path cell %d ops %s  rel_l1 %.4f\n", b + 1, top.cell,
                    path_to_string(top.path).c_str(), top.loss);
    }

    const SearchResult best = traversal_search(cfg, rankings, table, {});
    show("unconstrained", best);

    Constraint tight;
    tight.metric = CostMetric::params;
    tight.bound = best.cost.params - 1;
    tight.active = true;
    try {
        show("constrained", traversal_search(cfg, rankings, table, tight));
    } catch (const NoFeasibleModelError&) {
        std::printf("constrained    no model fits under %lld params\n",
                    static_cast<long long>(tight.bound));
    }
    return 0;
}
