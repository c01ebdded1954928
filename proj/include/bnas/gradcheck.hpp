#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "bnas/graph.hpp"
#include "bnas/rng.hpp"

// Finite-difference verification of the backward pass, always in 64-bit.
// Each probe scalarizes the layer output as f = sum(R * out) for a fixed
// random R, then compares analytic gradients against central differences.
namespace bnas {

struct GradCheckReport {
    double max_rel_err = 0.0;
    int64_t probes = 0;
};

namespace detail {

struct GradProbe {
    Graph graph;
    std::vector<TensorD> inputs;
    std::vector<bool> input_diff;  // false for label-like inputs
    ParameterSet<double> params;
    RunMode mode = RunMode::train;
};

inline double gc_eval(GradProbe& pr, const TensorD& r) {
    // batchnorm train mutates running stats, so evaluate on a copy
    ParameterSet<double> ps = pr.params;
    Tape<double> tape = forward(pr.graph, pr.inputs, ps, pr.mode);
    const TensorD& out = tape.output();
    double acc = 0.0;
    for (int64_t i = 0; i < out.numel(); ++i) acc += r.data[i] * out.data[i];
    return acc;
}

inline void gc_probe_element(GradProbe& pr, double* slot, double analytic, const TensorD& r, double h,
                             GradCheckReport& rep) {
    const double saved = *slot;
    *slot = saved + h;
    const double fp = gc_eval(pr, r);
    *slot = saved - h;
    const double fm = gc_eval(pr, r);
    *slot = saved;
    const double fd = (fp - fm) / (2.0 * h);
    const double err = std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1.0});
    rep.max_rel_err = std::max(rep.max_rel_err, err);
    rep.probes += 1;
}

inline void gc_run(GradProbe& pr, Rng& rng, GradCheckReport& rep, double h = 1e-5) {
    // analytic pass
    ParameterSet<double> ps = pr.params;
    Tape<double> tape = forward(pr.graph, pr.inputs, ps, pr.mode);
    TensorD r(tape.output().shape);
    for (auto& x : r.data) x = rng.normal();
    ps.clear_grads();
    std::vector<TensorD> din = backward(tape, ps, r);

    size_t input_idx = 0;
    for (int i = 0; i < pr.graph.size(); ++i) {
        if (pr.graph.node(i).spec.kind != LayerKind::input) continue;
        const size_t k = input_idx++;
        if (!pr.input_diff[k]) continue;
        TensorD& t = pr.inputs[k];
        for (int64_t j = 0; j < t.numel(); ++j)
            gc_probe_element(pr, &t.data[j], din[k].data[j], r, h, rep);
    }
    for (auto& [name, p] : pr.params.raw()) {
        if (!p.trainable) continue;
        const TensorD& g = ps.grad_of(name);
        for (int64_t j = 0; j < p.value.numel(); ++j)
            gc_probe_element(pr, &p.value.data[j], g.data[j], r, h, rep);
    }
}

inline GradProbe gc_make_probe(const LayerSpec& s, Rng& rng) {
    GradProbe pr;
    auto randn = [&](TensorD& t, double scale = 1.0) {
        for (auto& x : t.data) x = rng.normal() * scale;
    };
    const int64_t N = 2;
    switch (s.kind) {
        case LayerKind::conv2d:
        case LayerKind::depthwise_conv2d:
        case LayerKind::batchnorm:
        case LayerKind::activation:
        case LayerKind::squeeze_excite:
        case LayerKind::global_avg_pool: {
            const int64_t C = s.in_channels > 0 ? s.in_channels : 3;
            TensorD x({N, C, 5, 4});
            randn(x);
            int in = pr.graph.add_input("x", x.shape);
            pr.graph.add("layer", s, {in});
            pr.inputs.push_back(std::move(x));
            pr.input_diff.push_back(true);
            break;
        }
        case LayerKind::fully_connected: {
            TensorD x({N, s.in_channels});
            randn(x);
            int in = pr.graph.add_input("x", x.shape);
            pr.graph.add("layer", s, {in});
            pr.inputs.push_back(std::move(x));
            pr.input_diff.push_back(true);
            break;
        }
        case LayerKind::elementwise_add:
        case LayerKind::mse_loss: {
            TensorD a({N, 3, 4, 4}), b({N, 3, 4, 4});
            randn(a);
            randn(b);
            int ia = pr.graph.add_input("a", a.shape);
            int ib = pr.graph.add_input("b", b.shape);
            pr.graph.add("layer", s, {ia, ib});
            pr.inputs.push_back(std::move(a));
            pr.inputs.push_back(std::move(b));
            pr.input_diff.push_back(true);
            pr.input_diff.push_back(true);
            break;
        }
        case LayerKind::softmax_cross_entropy: {
            const int64_t K = 5;
            TensorD logits({N, K});
            randn(logits);
            TensorD labels({N});
            for (auto& x : labels.data) x = double(rng.uniform_int(uint64_t(K)));
            int il = pr.graph.add_input("logits", logits.shape);
            int iy = pr.graph.add_input("labels", labels.shape);
            pr.graph.add("layer", s, {il, iy});
            pr.inputs.push_back(std::move(logits));
            pr.inputs.push_back(std::move(labels));
            pr.input_diff.push_back(true);
            pr.input_diff.push_back(false);
            break;
        }
        case LayerKind::input:
            throw ConfigError("grad_check: input is not a computing layer");
    }
    init_params(pr.graph, pr.params, Rng::derive(rng.next(), "gc-init"));
    // move running stats off their fixed point so the eval path is exercised too
    for (auto& [name, p] : pr.params.raw()) {
        if (name.ends_with(".rmean"))
            for (auto& x : p.value.data) x = rng.normal() * 0.1;
        if (name.ends_with(".rvar"))
            for (auto& x : p.value.data) x = 1.0 + 0.3 * rng.uniform();
    }
    return pr;
}

}  // namespace detail

// Worst relative error across inputs and parameters over `trials` seeded
// random instantiations of the layer.
inline GradCheckReport grad_check(const LayerSpec& s, int trials, uint64_t seed = 7, RunMode mode = RunMode::train) {
    GradCheckReport rep;
    for (int t = 0; t < trials; ++t) {
        Rng rng = Rng::derive(seed, "gradcheck", uint64_t(t));
        detail::GradProbe pr = detail::gc_make_probe(s, rng);
        pr.mode = mode;
        detail::gc_run(pr, rng, rep);
    }
    return rep;
}

}  // namespace bnas
