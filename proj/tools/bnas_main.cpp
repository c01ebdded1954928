// Pipeline driver: every stage of the distillation-ranking-search flow as a
// subcommand over one shared config file. Artifacts land in a directory
// keyed by the config hash, so reruns are idempotent and concurrent
// invocations for distinct blocks stay write-disjoint.
//
// Exit codes: 0 ok, 2 config error, 3 missing upstream artifact, 1 runtime.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "bnas/artifacts.hpp"
#include "bnas/bench.hpp"
#include "bnas/config_file.hpp"
#include "bnas/evaluator.hpp"
#include "bnas/searcher.hpp"

namespace fs = std::filesystem;
using namespace bnas;

namespace {

RunConfig load_config(const std::string& path) {
    if (!fs::exists(path)) throw ConfigError("config file '" + path + "' does not exist");
    return parse_run_config(read_text_file(path));
}

Dataset concat_datasets(std::vector<Dataset> parts) {
    if (parts.size() == 1) return std::move(parts[0]);
    int64_t n = 0;
    for (const Dataset& d : parts) n += d.size();
    Dataset out;
    out.images = TensorF({n, parts[0].images.shape[1], parts[0].images.shape[2], parts[0].images.shape[3]});
    out.labels.reserve(size_t(n));
    int64_t row = 0;
    const int64_t px = parts[0].images.numel() / parts[0].size();
    for (const Dataset& d : parts) {
        std::copy_n(d.images.ptr(), d.images.numel(), out.images.ptr() + row * px);
        out.labels.insert(out.labels.end(), d.labels.begin(), d.labels.end());
        row += d.size();
    }
    return out;
}

// Deterministic train/val pair straight from the config: synthetic data is
// regenerated, CIFAR-10 is read from data-dir with the standard file names.
std::pair<Dataset, Dataset> make_datasets(const RunConfig& rc) {
    if (rc.net.dataset == "synthetic") {
        SyntheticSpec spec;
        spec.class_count = rc.net.num_classes;
        spec.images_per_class = rc.images_per_class;
        spec.size = rc.net.input_size;
        spec.noise = rc.noise;
        const Dataset full = gen_synthetic(rc.net.seed, spec);
        return split_holdout(full, rc.val_fraction, rc.net.seed, "train", "val");
    }
    if (rc.data_dir.empty()) throw ConfigError("dataset cifar10 needs a data-dir key");
    std::vector<Dataset> parts;
    for (int i = 1; i <= 5; ++i)
        parts.push_back(load_cifar10(rc.data_dir + "/data_batch_" + std::to_string(i) + ".bin"));
    Dataset train = concat_datasets(std::move(parts));
    train.split = "train";
    Dataset val = load_cifar10(rc.data_dir + "/test_batch.bin");
    val.split = "val";
    return {std::move(train), std::move(val)};
}

void ensure_run_dir(const ArtifactPaths& ap, const RunConfig& rc) {
    fs::create_directories(ap.root);
    write_file_atomic(ap.config_txt(), run_config_to_text(rc));
}

void print_epoch_means(const std::string& tag, const std::vector<LossPoint>& curve) {
    int epoch = -1;
    double sum = 0.0;
    int64_t count = 0;
    const auto flush = [&] {
        if (count > 0)
            std::printf("%s epoch %d steps %lld mean_loss %.6f\n", tag.c_str(), epoch + 1,
                        static_cast<long long>(count), sum / double(count));
    };
    for (const LossPoint& p : curve) {
        if (p.epoch != epoch) {
            flush();
            epoch = p.epoch;
            sum = 0.0;
            count = 0;
        }
        sum += p.loss;
        count += 1;
    }
    flush();
}

FeatureCache load_feature_cache(const ArtifactPaths& ap) {
    require_artifact(ap.features_ckpt(), "features-extract");
    return feature_cache_from_container(load_container(ap.features_ckpt()));
}

std::vector<PathRanking> load_rankings(const RunConfig& rc, const ArtifactPaths& ap) {
    std::vector<PathRanking> rankings;
    for (size_t b = 0; b < rc.net.blocks.size(); ++b) {
        const fs::path p = ap.ranking_csv(int(b) + 1);
        require_artifact(p, "evaluate");
        rankings.push_back(ranking_from_csv(read_text_file(p)));
    }
    return rankings;
}

int cmd_teacher_train(const RunConfig& rc, const ArtifactPaths& ap) {
    Stopwatch watch;
    auto [train, val] = make_datasets(rc);
    TeacherTrainConfig tc;
    tc.fit.epochs = rc.teacher_epochs;
    tc.fit.batch_size = rc.distill.batch_size;
    tc.fit.lr = rc.teacher_lr;
    tc.fit.seed = rc.net.seed;
    tc.fit.augment = rc.augment;
    tc.accuracy_floor = rc.accuracy_floor;
    TeacherModel teacher = train_teacher(rc.net, train, val, tc);
    const double acc = evaluate_accuracy(teacher.eval_layout.graph, teacher.params, val);
    std::printf("teacher val_accuracy %.4f floor %.4f\n", acc, tc.accuracy_floor);
    save_params(teacher.params, ap.teacher_ckpt());
    write_manifest(ap, "teacher-train", rc, {ap.config_txt()}, {ap.teacher_ckpt()}, watch.seconds());
    return 0;
}

int cmd_features_extract(const RunConfig& rc, const ArtifactPaths& ap) {
    Stopwatch watch;
    require_artifact(ap.teacher_ckpt(), "teacher-train");
    auto [train, val] = make_datasets(rc);
    TeacherModel teacher = make_teacher(rc.net);
    load_params(teacher.params, ap.teacher_ckpt());
    const FeatureCache cache = extract_features(teacher, {{"train", &train}, {"val", &val}});
    save_container(feature_cache_to_container(cache), ap.features_ckpt());
    for (size_t b = 0; b < rc.net.blocks.size(); ++b)
        std::printf("features block %zu train_sigma %.6f val_sigma %.6f\n", b + 1,
                    cache.split("train").stddev[b], cache.split("val").stddev[b]);
    write_manifest(ap, "features-extract", rc, {ap.teacher_ckpt()}, {ap.features_ckpt()}, watch.seconds());
    return 0;
}

int cmd_supernet_train(const RunConfig& rc, const ArtifactPaths& ap, int block, bool all_blocks,
                       const std::string& strategy_flag) {
    Stopwatch watch;
    DistillConfig dc = rc.distill;
    if (!strategy_flag.empty()) dc.strategy = parse_strategy(strategy_flag);
    const int n = int(rc.net.blocks.size());
    if (!all_blocks && block == 0) throw ConfigError("supernet-train wants --block I or --all-blocks");
    if (block != 0 && (block < 1 || block > n))
        throw ConfigError("--block " + std::to_string(block) + " outside 1.." + std::to_string(n));

    const FeatureCache cache = load_feature_cache(ap);
    std::vector<fs::path> outputs;
    const auto emit = [&](int b1, const BlockCheckpoint& ck) {
        save_params(ck.params, ap.block_ckpt(b1, dc.strategy));
        write_file_atomic(ap.block_curve(b1, dc.strategy), curve_to_csv(ck.curve));
        outputs.push_back(ap.block_ckpt(b1, dc.strategy));
        outputs.push_back(ap.block_curve(b1, dc.strategy));
        print_epoch_means(ArtifactPaths::block_stem(b1, dc.strategy), ck.curve);
    };

    if (dc.strategy == Strategy::dna) {
        if (all_blocks) {
            const std::vector<BlockCheckpoint> cks = train_all_blocks(rc.net, cache, dc, true);
            for (int b = 0; b < n; ++b) emit(b + 1, cks[size_t(b)]);
        } else {
            emit(block, train_block(rc.net, size_t(block - 1), cache, dc));
        }
    } else {
        const size_t upto = all_blocks ? size_t(n) : size_t(block);
        const std::vector<BlockCheckpoint> cks = train_blocks_sequential(rc.net, cache, dc, upto);
        for (size_t b = 0; b < cks.size(); ++b) emit(int(b) + 1, cks[b]);
    }
    write_manifest(ap, "supernet-train", rc, {ap.features_ckpt()}, outputs, watch.seconds());
    return 0;
}

int cmd_spos_train(const RunConfig& rc, const ArtifactPaths& ap) {
    Stopwatch watch;
    auto [train, val] = make_datasets(rc);
    (void)val;
    const SposCheckpoint ck = train_spos_baseline(rc.net, train, rc.distill);
    save_params(ck.params, ap.spos_ckpt());
    write_file_atomic(ap.spos_curve(), curve_to_csv(ck.curve));
    print_epoch_means("spos", ck.curve);
    write_manifest(ap, "spos-train", rc, {ap.config_txt()}, {ap.spos_ckpt(), ap.spos_curve()}, watch.seconds());
    return 0;
}

int cmd_cost_table(const RunConfig& rc, const ArtifactPaths& ap) {
    Stopwatch watch;
    const CostTable table = build_cost_table(rc.net);
    write_file_atomic(ap.cost_table_csv(), cost_table_to_csv(table, config_hash(rc)));
    std::printf("cost table entries %zu stem params %lld head params %lld\n", table.entries.size(),
                static_cast<long long>(table.stem.params), static_cast<long long>(table.head.params));
    write_manifest(ap, "cost-table", rc, {ap.config_txt()}, {ap.cost_table_csv()}, watch.seconds());
    return 0;
}

int cmd_evaluate(const RunConfig& rc, const ArtifactPaths& ap, const std::string& strategy_flag) {
    Stopwatch watch;
    Strategy strategy = rc.distill.strategy;
    if (!strategy_flag.empty()) strategy = parse_strategy(strategy_flag);
    const FeatureCache cache = load_feature_cache(ap);
    const CostTable table = build_cost_table(rc.net);
    std::vector<fs::path> inputs{ap.features_ckpt()};
    std::vector<fs::path> outputs;
    for (size_t b = 0; b < rc.net.blocks.size(); ++b) {
        const fs::path ckpt = ap.block_ckpt(int(b) + 1, strategy);
        require_artifact(ckpt, "supernet-train");
        BlockCheckpoint ck;
        load_params(ck.params, ckpt);
        DfsStats stats;
        const PathRanking ranking = rank_block(rc.net, b, ck, cache, table, &stats, rc.distill.batch_size);
        write_file_atomic(ap.ranking_csv(int(b) + 1, strategy), ranking_to_csv(ranking));
        nlohmann::json side;
        side["config_hash"] = config_hash(rc);
        side["block"] = b + 1;
        side["strategy"] = strategy_name(strategy);
        side["checkpoint"] = {{"path", ckpt.string()}, {"fingerprint", file_fingerprint(ckpt)}};
        side["features"] = {{"path", ap.features_ckpt().string()},
                            {"fingerprint", file_fingerprint(ap.features_ckpt())}};
        side["op_calls"] = stats.op_calls;
        write_file_atomic(ap.ranking_sidecar(int(b) + 1, strategy), side.dump(2) + "\n");
        std::printf("ranking block %zu entries %zu op_calls %lld best_loss %.6f\n", b + 1,
                    ranking.records.size(), static_cast<long long>(stats.op_calls), ranking.records[0].loss);
        inputs.push_back(ckpt);
        outputs.push_back(ap.ranking_csv(int(b) + 1, strategy));
        outputs.push_back(ap.ranking_sidecar(int(b) + 1, strategy));
    }
    write_manifest(ap, "evaluate", rc, inputs, outputs, watch.seconds());
    return 0;
}

void print_search_result(const SearchResult& r) {
    std::printf("arch %s\n", arch_to_string(r.arch).c_str());
    std::printf("loss %.9g params %lld madds %lld visited %lld proof %s\n", r.loss,
                static_cast<long long>(r.cost.params), static_cast<long long>(r.cost.madds),
                static_cast<long long>(r.visited), r.proof.c_str());
}

int cmd_search(const RunConfig& rc, const ArtifactPaths& ap, const std::string& metric, int64_t bound) {
    Stopwatch watch;
    Constraint c;
    if (bound > 0) {
        c.metric = parse_cost_metric(metric);
        c.bound = bound;
        c.active = true;
    }
    const std::vector<PathRanking> rankings = load_rankings(rc, ap);
    const CostTable table = build_cost_table(rc.net);
    const SearchResult result = traversal_search(rc.net, rankings, table, c);
    print_search_result(result);
    write_file_atomic(ap.search_txt(c), arch_descriptor_text(result.arch, &result));
    std::vector<fs::path> inputs;
    for (size_t b = 0; b < rc.net.blocks.size(); ++b) inputs.push_back(ap.ranking_csv(int(b) + 1));
    write_manifest(ap, "search", rc, inputs, {ap.search_txt(c)}, watch.seconds());
    return 0;
}

int cmd_pareto(const RunConfig& rc, const ArtifactPaths& ap, const std::string& metric,
               const std::string& bounds_arg) {
    Stopwatch watch;
    const CostMetric m = parse_cost_metric(metric);
    std::vector<int64_t> bounds;
    std::istringstream is(bounds_arg);
    std::string tok;
    while (std::getline(is, tok, ',')) {
        try {
            bounds.push_back(std::stoll(tok));
        } catch (const std::exception&) {
            throw ConfigError("--bounds wants comma-separated integers, got '" + tok + "'");
        }
    }
    if (bounds.empty()) throw ConfigError("--bounds wants at least one value");

    const std::vector<PathRanking> rankings = load_rankings(rc, ap);
    const CostTable table = build_cost_table(rc.net);
    const auto sweep = pareto_sweep(rc.net, rankings, table, m, bounds);
    CsvWriter w({"bound", "feasible", "loss", "params", "madds", "visited", "arch"});
    for (const auto& [bound, result] : sweep) {
        if (result) {
            w.row({std::to_string(bound), "1", csv_double(result->loss), std::to_string(result->cost.params),
                   std::to_string(result->cost.madds), std::to_string(result->visited),
                   arch_to_string(result->arch)});
            std::printf("bound %lld loss %.9g %s\n", static_cast<long long>(bound), result->loss,
                        arch_to_string(result->arch).c_str());
        } else {
            w.row({std::to_string(bound), "0", "", "", "", "", ""});
            std::printf("bound %lld infeasible\n", static_cast<long long>(bound));
        }
    }
    write_file_atomic(ap.pareto_csv(m), w.str());
    std::vector<fs::path> inputs;
    for (size_t b = 0; b < rc.net.blocks.size(); ++b) inputs.push_back(ap.ranking_csv(int(b) + 1));
    write_manifest(ap, "pareto", rc, inputs, {ap.pareto_csv(m)}, watch.seconds());
    return 0;
}

int cmd_retrain(const RunConfig& rc, const ArtifactPaths& ap, const std::string& arch_file) {
    Stopwatch watch;
    require_artifact(arch_file, "search");
    const ArchEncoding arch = arch_descriptor_parse(read_text_file(arch_file));
    auto [train, val] = make_datasets(rc);
    FitConfig fc;
    fc.epochs = rc.retrain_epochs;
    fc.batch_size = rc.distill.batch_size;
    fc.lr = rc.retrain_lr;
    fc.seed = rc.net.seed;
    fc.augment = rc.augment;
    const RetrainResult res = retrain_standalone(rc.net, arch, train, val, fc);
    std::printf("retrain arch %s best_acc %.4f final_acc %.4f\n", arch_to_string(arch).c_str(), res.best_acc,
                res.final_acc);
    nlohmann::json j;
    j["arch"] = arch_to_string(arch);
    j["best_acc"] = res.best_acc;
    j["final_acc"] = res.final_acc;
    j["epoch_acc"] = res.epoch_acc;
    const fs::path out = ap.root / ("retrain." + file_fingerprint(arch_file) + ".json");
    write_file_atomic(out, j.dump(2) + "\n");
    write_manifest(ap, "retrain", rc, {fs::path(arch_file)}, {out}, watch.seconds());
    return 0;
}

int cmd_rank_report(const RunConfig& rc, const ArtifactPaths& ap) {
    Stopwatch watch;
    const std::vector<PathRanking> rankings = load_rankings(rc, ap);
    require_artifact(ap.spos_ckpt(), "spos-train");
    SposCheckpoint spos;
    load_params(spos.params, ap.spos_ckpt());
    auto [train, val] = make_datasets(rc);

    const std::vector<ArchEncoding> archs = sample_architectures(rc.net, rc.bench_archs, rc.net.seed);
    std::vector<BenchTrial> trials;
    for (size_t i = 0; i < archs.size(); ++i) {
        BenchTrial t;
        t.id = int(i);
        t.arch = archs[i];
        t.seed = Rng::derive(rc.net.seed, "retrain-trial", i).next();
        t.dna_score = dna_score(rc.net, rankings, t.arch);
        t.spos_score = spos_predict(rc.net, spos, t.arch, val);
        FitConfig fc;
        fc.epochs = rc.retrain_epochs;
        fc.batch_size = rc.distill.batch_size;
        fc.lr = rc.retrain_lr;
        fc.seed = t.seed;
        fc.augment = rc.augment;
        t.true_acc = retrain_standalone(rc.net, t.arch, train, val, fc).best_acc;
        std::printf("trial %zu arch %s dna %.6f spos %.4f true %.4f\n", i, arch_to_string(t.arch).c_str(),
                    t.dna_score, t.spos_score, t.true_acc);
        trials.push_back(std::move(t));
    }
    const BenchReport rep = bench_report(trials);
    write_file_atomic(ap.trials_csv(), bench_to_csv(trials));
    write_file_atomic(ap.report_txt(), bench_report_text(rep));
    std::fputs(bench_report_text(rep).c_str(), stdout);
    std::vector<fs::path> inputs{ap.spos_ckpt()};
    for (size_t b = 0; b < rc.net.blocks.size(); ++b) inputs.push_back(ap.ranking_csv(int(b) + 1));
    write_manifest(ap, "rank-report", rc, inputs, {ap.trials_csv(), ap.report_txt()}, watch.seconds());
    return 0;
}

int cmd_space_size(const RunConfig& rc) {
    const BigInt total = space_size(rc.net);
    std::printf("space-size %s ≈ %.3g\n", total.str().c_str(), total.convert_to<double>());
    return 0;
}

int cmd_drop_rate(const RunConfig& rc, int block) {
    const int n = int(rc.net.blocks.size());
    const auto show = [&](int b) {
        const BigRat rate = drop_rate(rc.net, size_t(b - 1));
        std::printf("drop-rate block %d %s/%s ≈ %.3g\n", b,
                    boost::multiprecision::numerator(rate).str().c_str(),
                    boost::multiprecision::denominator(rate).str().c_str(), rate.convert_to<double>());
    };
    if (block != 0) {
        if (block < 1 || block > n)
            throw ConfigError("--block " + std::to_string(block) + " outside 1.." + std::to_string(n));
        show(block);
    } else {
        for (int b = 1; b <= n; ++b) show(b);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"blockwise distillation, evaluation, and exact architecture search"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_root = "runs";
    app.add_option("--config", config_path, "run config file")->required();
    app.add_option("--out", out_root, "artifact root directory");

    auto* teacher_train = app.add_subcommand("teacher-train", "train the fixed teacher and checkpoint it");
    auto* features_extract = app.add_subcommand("features-extract", "cache per-block teacher features");
    auto* supernet_train = app.add_subcommand("supernet-train", "train student cells against teacher features");
    int block = 0;
    bool all_blocks = false;
    std::string strategy_flag;
    supernet_train->add_option("--block", block, "1-based block to train");
    supernet_train->add_flag("--all-blocks", all_blocks, "train every block in-process (parallel for dna)");
    supernet_train->add_option("--strategy", strategy_flag, "dna, s1, or s2 (defaults to the config)");
    auto* spos_train = app.add_subcommand("spos-train", "train the single-path one-shot baseline");
    auto* evaluate = app.add_subcommand("evaluate", "rate all paths per block and write rankings");
    std::string eval_strategy_flag;
    evaluate->add_option("--strategy", eval_strategy_flag, "checkpoint set to evaluate (defaults to the config)");
    auto* cost_table = app.add_subcommand("cost-table", "write the per-op cost lookup table");
    auto* search = app.add_subcommand("search", "exact constrained search over the rankings");
    std::string metric = "params";
    int64_t bound = 0;
    search->add_option("--metric", metric, "params or madds");
    search->add_option("--bound", bound, "cost bound; omit for unconstrained");
    auto* pareto = app.add_subcommand("pareto", "one search per bound, ascending");
    std::string pareto_metric = "params";
    std::string bounds_arg;
    pareto->add_option("--metric", pareto_metric, "params or madds");
    pareto->add_option("--bounds", bounds_arg, "comma-separated cost bounds")->required();
    auto* retrain = app.add_subcommand("retrain", "train a searched architecture from scratch");
    std::string arch_file;
    retrain->add_option("--arch", arch_file, "architecture descriptor file")->required();
    auto* rank_report = app.add_subcommand("rank-report", "sampled-arch ranking fidelity benchmark");
    auto* space_size_cmd = app.add_subcommand("space-size", "exact model count of the space");
    auto* drop_rate_cmd = app.add_subcommand("drop-rate", "per-block chance a uniform draw hits one path");
    int drop_block = 0;
    drop_rate_cmd->add_option("--block", drop_block, "1-based block (default: all)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        const RunConfig rc = load_config(config_path);
        const ArtifactPaths ap = run_paths(out_root, rc);
        if (!space_size_cmd->parsed() && !drop_rate_cmd->parsed()) ensure_run_dir(ap, rc);

        if (teacher_train->parsed()) return cmd_teacher_train(rc, ap);
        if (features_extract->parsed()) return cmd_features_extract(rc, ap);
        if (supernet_train->parsed()) return cmd_supernet_train(rc, ap, block, all_blocks, strategy_flag);
        if (spos_train->parsed()) return cmd_spos_train(rc, ap);
        if (evaluate->parsed()) return cmd_evaluate(rc, ap, eval_strategy_flag);
        if (cost_table->parsed()) return cmd_cost_table(rc, ap);
        if (search->parsed()) return cmd_search(rc, ap, metric, bound);
        if (pareto->parsed()) return cmd_pareto(rc, ap, pareto_metric, bounds_arg);
        if (retrain->parsed()) return cmd_retrain(rc, ap, arch_file);
        if (rank_report->parsed()) return cmd_rank_report(rc, ap);
        if (space_size_cmd->parsed()) return cmd_space_size(rc);
        if (drop_rate_cmd->parsed()) return cmd_drop_rate(rc, drop_block);
        std::fprintf(stderr, "no subcommand dispatched\n");
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const MissingArtifactError& e) {
        std::fprintf(stderr, "missing artifact: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
