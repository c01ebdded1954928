#pragma once

#include <map>
#include <string>
#include <vector>

#include "bnas/classifier.hpp"
#include "bnas/model_builder.hpp"
#include "bnas/serialize.hpp"

namespace bnas {

struct TeacherModel {
    TeacherLayout train_layout;  // graph with loss head
    TeacherLayout eval_layout;   // logits only
    ParameterSet<float> params;
};

struct TeacherTrainConfig {
    FitConfig fit;
    double accuracy_floor = 0.85;
};

inline TeacherModel make_teacher(const SupernetConfig& cfg) {
    TeacherModel t;
    t.train_layout = build_teacher(cfg, true);
    t.eval_layout = build_teacher(cfg, false);
    init_params(t.train_layout.graph, t.params, Rng::derive(cfg.seed, "teacher-init"));
    return t;
}

// Trains the fixed desk teacher and gates on a validation-accuracy floor.
// The floor is a hard contract: failing it raises instead of returning a
// weak teacher, since every later stage assumes usable target features.
inline TeacherModel train_teacher(const SupernetConfig& cfg, const Dataset& train, const Dataset& val,
                                  const TeacherTrainConfig& tc) {
    TeacherModel t = make_teacher(cfg);
    fit_classifier(t.train_layout.graph, t.params, train, tc.fit);
    const double acc = evaluate_accuracy(t.eval_layout.graph, t.params, val);
    if (acc < tc.accuracy_floor) {
        char buf[160];
        std::snprintf(buf, sizeof buf,
                      "teacher stopped below the accuracy floor: val accuracy %.4f < %.4f after %d epochs", acc,
                      tc.accuracy_floor, tc.fit.epochs);
        throw Error(buf);
    }
    return t;
}

// Per-split teacher features: the prelude output (the input every block-1
// student consumes) plus one feature map per block, with whole-split
// element statistics for the relative-L1 denominator.
struct SplitFeatures {
    TensorF input;                // prelude output, [N, stem, S, S]
    std::vector<TensorF> blocks;  // blocks[i] = block i+1 output
    std::vector<double> mean;     // per block
    std::vector<double> stddev;   // population, per block, over all elements
};

struct FeatureCache {
    std::map<std::string, SplitFeatures> splits;

    const SplitFeatures& split(const std::string& name) const {
        auto it = splits.find(name);
        if (it == splits.end()) throw MissingArtifactError("feature cache has no split '" + name + "'");
        return it->second;
    }
};

namespace detail {

inline void split_stats(SplitFeatures& sf) {
    sf.mean.clear();
    sf.stddev.clear();
    for (const TensorF& t : sf.blocks) {
        double sum = 0.0;
        for (float v : t.data) sum += double(v);
        const double mean = sum / double(t.numel());
        double vsum = 0.0;
        for (float v : t.data) {
            const double d = double(v) - mean;
            vsum += d * d;
        }
        sf.mean.push_back(mean);
        sf.stddev.push_back(std::sqrt(vsum / double(t.numel())));
    }
}

}  // namespace detail

// Frozen eval-mode extraction of every block output over whole splits.
// Deterministic: same checkpoint and data give bit-identical caches.
inline FeatureCache extract_features(TeacherModel& teacher,
                                     const std::vector<std::pair<std::string, const Dataset*>>& splits,
                                     int64_t batch_size = 100) {
    FeatureCache cache;
    const Graph& g = teacher.eval_layout.graph;
    const std::vector<int>& bounds = teacher.eval_layout.boundaries;
    for (const auto& [name, ds] : splits) {
        SplitFeatures sf;
        const int64_t n = ds->size();
        bool sized = false;
        ParameterSet<float>& ps = teacher.params;
        for (int64_t start = 0; start < n; start += batch_size) {
            const int64_t count = std::min(batch_size, n - start);
            Tape<float> tape = forward(g, {image_batch(*ds, start, count)}, ps, RunMode::eval);
            const TensorF& stem = tape.value(teacher.eval_layout.stem_node);
            if (!sized) {
                Shape s = stem.shape;
                s[0] = n;
                sf.input = TensorF(s);
                for (int b : bounds) {
                    Shape bs = tape.value(b).shape;
                    bs[0] = n;
                    sf.blocks.emplace_back(bs);
                }
                sized = true;
            }
            const int64_t spx = stem.numel() / count;
            std::copy_n(stem.ptr(), count * spx, sf.input.ptr() + start * spx);
            for (size_t bi = 0; bi < bounds.size(); ++bi) {
                const TensorF& y = tape.value(bounds[bi]);
                const int64_t px = y.numel() / count;
                std::copy_n(y.ptr(), count * px, sf.blocks[bi].ptr() + start * px);
            }
        }
        detail::split_stats(sf);
        cache.splits.emplace(name, std::move(sf));
    }
    return cache;
}

inline Container feature_cache_to_container(const FeatureCache& cache) {
    Container c;
    for (const auto& [name, sf] : cache.splits) {
        c.put(name + "/input", sf.input);
        for (size_t b = 0; b < sf.blocks.size(); ++b)
            c.put(name + "/block" + std::to_string(b + 1), sf.blocks[b]);
        TensorD mean({int64_t(sf.mean.size())});
        TensorD stddev({int64_t(sf.stddev.size())});
        std::copy(sf.mean.begin(), sf.mean.end(), mean.data.begin());
        std::copy(sf.stddev.begin(), sf.stddev.end(), stddev.data.begin());
        c.put(name + "/mean", mean);
        c.put(name + "/std", stddev);
    }
    return c;
}

inline FeatureCache feature_cache_from_container(const Container& c) {
    FeatureCache cache;
    for (const auto& [key, var] : c.entries) {
        const size_t slash = key.find('/');
        if (slash == std::string::npos) throw DataError("feature cache entry '" + key + "' has no split prefix");
        const std::string split = key.substr(0, slash);
        const std::string what = key.substr(slash + 1);
        SplitFeatures& sf = cache.splits[split];
        if (what == "input") {
            sf.input = std::get<TensorF>(var);
        } else if (what == "mean") {
            const TensorD& t = std::get<TensorD>(var);
            sf.mean.assign(t.data.begin(), t.data.end());
        } else if (what == "std") {
            const TensorD& t = std::get<TensorD>(var);
            sf.stddev.assign(t.data.begin(), t.data.end());
        } else if (what.rfind("block", 0) == 0) {
            const size_t idx = size_t(std::stoi(what.substr(5)));
            if (sf.blocks.size() < idx) sf.blocks.resize(idx);
            sf.blocks[idx - 1] = std::get<TensorF>(var);
        } else {
            throw DataError("unrecognized feature cache entry '" + key + "'");
        }
    }
    return cache;
}

}  // namespace bnas
