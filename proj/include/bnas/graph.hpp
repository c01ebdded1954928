#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bnas/errors.hpp"
#include "bnas/kernels.hpp"
#include "bnas/layers.hpp"
#include "bnas/rng.hpp"
#include "bnas/serialize.hpp"
#include "bnas/tensor.hpp"

namespace bnas {

// A model is a flat list of nodes in topological order. Node inputs refer to
// earlier nodes by index. Parameters live outside the graph, keyed by
// "<node-name>.<suffix>", so the same graph definition can run against
// different weight sets (and the same weight set can back multiple graphs,
// which is how shared supernet cells work).
struct Node {
    std::string name;
    LayerSpec spec;
    std::vector<int> inputs;  // indices of producer nodes; empty for kind==input
};

class Graph {
  public:
    int add_input(const std::string& name, Shape shape) {
        Node n;
        n.name = name;
        n.spec.kind = LayerKind::input;
        input_shapes_.push_back(std::move(shape));
        nodes_.push_back(std::move(n));
        return int(nodes_.size()) - 1;
    }

    int add(const std::string& name, LayerSpec spec, std::vector<int> inputs) {
        for (int i : inputs)
            if (i < 0 || i >= int(nodes_.size()))
                throw ConfigError("graph node '" + name + "' references undefined input");
        for (const auto& n : nodes_)
            if (n.name == name) throw ConfigError("duplicate graph node name '" + name + "'");
        Node n;
        n.name = name;
        n.spec = std::move(spec);
        n.inputs = std::move(inputs);
        nodes_.push_back(std::move(n));
        return int(nodes_.size()) - 1;
    }

    const std::vector<Node>& nodes() const { return nodes_; }
    const Node& node(int i) const { return nodes_.at(size_t(i)); }
    int size() const { return int(nodes_.size()); }
    int num_inputs() const { return int(input_shapes_.size()); }
    const std::vector<Shape>& input_shapes() const { return input_shapes_; }

    // Static shape propagation; validates every node.
    std::vector<Shape> infer_shapes(const std::vector<Shape>& inputs) const {
        if (int(inputs.size()) != num_inputs())
            throw ShapeError("graph expects " + std::to_string(num_inputs()) + " inputs, got " +
                             std::to_string(inputs.size()));
        std::vector<Shape> shapes(nodes_.size());
        size_t next_input = 0;
        for (size_t i = 0; i < nodes_.size(); ++i) {
            const Node& n = nodes_[i];
            if (n.spec.kind == LayerKind::input) {
                shapes[i] = inputs[next_input++];
                continue;
            }
            std::vector<Shape> in;
            in.reserve(n.inputs.size());
            for (int j : n.inputs) in.push_back(shapes[size_t(j)]);
            try {
                shapes[i] = infer_shape(n.spec, in);
            } catch (const Error& e) {
                throw ShapeError("node '" + n.name + "': " + e.what());
            }
        }
        return shapes;
    }

  private:
    std::vector<Node> nodes_;
    std::vector<Shape> input_shapes_;
};

template <typename T>
struct Param {
    Tensor<T> value;
    Tensor<T> grad;
    bool has_grad = false;
    bool trainable = true;  // false for batchnorm running stats
    // optimizer slots, lazily allocated
    Tensor<T> m, v;
    int64_t step = 0;
};

template <typename T>
class ParameterSet {
  public:
    using Map = std::map<std::string, Param<T>>;

    bool has(const std::string& name) const { return params_.count(name) != 0; }

    Param<T>& at(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
        return it->second;
    }
    const Param<T>& at(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
        return it->second;
    }

    Param<T>& get_or_create(const std::string& name, const Shape& shape, bool trainable) {
        auto it = params_.find(name);
        if (it != params_.end()) {
            if (it->second.value.shape != shape)
                throw ShapeError("parameter '" + name + "' exists with shape " + shape_str(it->second.value.shape) +
                                 ", wanted " + shape_str(shape));
            return it->second;
        }
        Param<T> p;
        p.value = Tensor<T>(shape);
        p.trainable = trainable;
        return params_.emplace(name, std::move(p)).first->second;
    }

    void clear_grads() {
        for (auto& [k, p] : params_) {
            (void)k;
            p.has_grad = false;
        }
    }

    void accumulate_grad(const std::string& name, Tensor<T>&& g) {
        Param<T>& p = at(name);
        if (!p.has_grad) {
            p.grad = std::move(g);
            p.has_grad = true;
        } else {
            for (int64_t i = 0; i < p.grad.numel(); ++i) p.grad.data[i] += g.data[i];
        }
    }

    // Zero-filled gradient view for parameters the tape never reached.
    const Tensor<T>& grad_of(const std::string& name) {
        Param<T>& p = at(name);
        if (!p.has_grad) {
            p.grad = Tensor<T>(p.value.shape);
            p.has_grad = true;
        }
        return p.grad;
    }

    Map& raw() { return params_; }
    const Map& raw() const { return params_; }
    size_t size() const { return params_.size(); }

    int64_t trainable_count() const {
        int64_t n = 0;
        for (const auto& [k, p] : params_) {
            (void)k;
            if (p.trainable) n += p.value.numel();
        }
        return n;
    }

    Container to_container() const {
        Container c;
        for (const auto& [k, p] : params_) c.put(k, p.value);
        return c;
    }

    // Loads values for all entries; creates missing parameters as trainable
    // unless the name marks a running statistic.
    void load_container(const Container& c) {
        for (const auto& [name, var] : c.entries) {
            const auto& t = std::get<Tensor<T>>(var);
            const bool buffer = name.ends_with(".rmean") || name.ends_with(".rvar");
            Param<T>& p = get_or_create(name, t.shape, !buffer);
            p.value = t;
        }
    }

  private:
    Map params_;
};

// Saved activations for one forward pass.
template <typename T>
struct Tape {
    const Graph* graph = nullptr;
    RunMode mode = RunMode::train;
    std::vector<Tensor<T>> values;  // one per node
    std::vector<kernels::BnCtx<T>> bn;
    std::vector<kernels::SeCtx<T>> se;
    std::vector<Tensor<T>> probs;  // softmax-ce per-node probabilities

    const Tensor<T>& output() const { return values.back(); }
    const Tensor<T>& value(int node) const { return values.at(size_t(node)); }
};

namespace detail {

template <typename T>
void init_node_params(const Node& n, ParameterSet<T>& ps, Rng& rng) {
    auto kaiming = [&](Tensor<T>& t, int64_t fan_in) {
        const double std = std::sqrt(2.0 / double(fan_in));
        for (auto& x : t.data) x = T(rng.normal() * std);
    };
    const LayerSpec& s = n.spec;
    switch (s.kind) {
        case LayerKind::conv2d: {
            auto& w = ps.get_or_create(n.name + ".w", {s.out_channels, s.in_channels, s.kernel, s.kernel}, true);
            kaiming(w.value, int64_t(s.in_channels) * s.kernel * s.kernel);
            if (s.bias) ps.get_or_create(n.name + ".b", {s.out_channels}, true);
            break;
        }
        case LayerKind::depthwise_conv2d: {
            auto& w = ps.get_or_create(n.name + ".w", {s.in_channels, s.kernel, s.kernel}, true);
            kaiming(w.value, int64_t(s.kernel) * s.kernel);
            break;
        }
        case LayerKind::batchnorm: {
            auto& g = ps.get_or_create(n.name + ".gamma", {s.in_channels}, true);
            std::fill(g.value.data.begin(), g.value.data.end(), T(1));
            auto& b = ps.get_or_create(n.name + ".beta", {s.in_channels}, true);
            std::fill(b.value.data.begin(), b.value.data.end(), T(0));
            auto& rm = ps.get_or_create(n.name + ".rmean", {s.in_channels}, false);
            std::fill(rm.value.data.begin(), rm.value.data.end(), T(0));
            auto& rv = ps.get_or_create(n.name + ".rvar", {s.in_channels}, false);
            std::fill(rv.value.data.begin(), rv.value.data.end(), T(1));
            break;
        }
        case LayerKind::squeeze_excite: {
            auto& w1 = ps.get_or_create(n.name + ".w1", {s.se_reduced, s.in_channels}, true);
            kaiming(w1.value, s.in_channels);
            auto& w2 = ps.get_or_create(n.name + ".w2", {s.in_channels, s.se_reduced}, true);
            kaiming(w2.value, s.se_reduced);
            break;
        }
        case LayerKind::fully_connected: {
            auto& w = ps.get_or_create(n.name + ".w", {s.out_channels, s.in_channels}, true);
            kaiming(w.value, s.in_channels);
            if (s.bias) ps.get_or_create(n.name + ".b", {s.out_channels}, true);
            break;
        }
        default:
            break;
    }
}

}  // namespace detail

// Creates (and initializes) every parameter the graph needs. Existing
// parameters are left untouched except for a shape check, so calling this
// for two graphs that share nodes wires them to the same storage.
//
// Draw order is the node order, so a given (graph, seed) pair always
// produces the same weights.
template <typename T>
void init_params(const Graph& g, ParameterSet<T>& ps, Rng rng) {
    for (const Node& n : g.nodes()) {
        if (n.spec.kind == LayerKind::input) continue;
        const std::string probe = n.name + (n.spec.kind == LayerKind::batchnorm ? ".gamma"
                                            : n.spec.kind == LayerKind::squeeze_excite ? ".w1"
                                                                                       : ".w");
        if (needs_params(n.spec.kind) && ps.has(probe)) continue;  // keep existing weights
        detail::init_node_params(n, ps, rng);
    }
}

// Runs the graph. In train mode every node output is checked finite and
// batchnorm consumes batch statistics (updating running buffers in ps);
// in eval mode batchnorm reads the running buffers and only the final
// output is checked.
template <typename T>
Tape<T> forward(const Graph& g, const std::vector<Tensor<T>>& inputs, ParameterSet<T>& ps, RunMode mode) {
    std::vector<Shape> in_shapes;
    in_shapes.reserve(inputs.size());
    for (const auto& t : inputs) in_shapes.push_back(t.shape);
    const std::vector<Shape> shapes = g.infer_shapes(in_shapes);

    Tape<T> tape;
    tape.graph = &g;
    tape.mode = mode;
    tape.values.resize(size_t(g.size()));
    tape.bn.resize(size_t(g.size()));
    tape.se.resize(size_t(g.size()));
    tape.probs.resize(size_t(g.size()));

    size_t next_input = 0;
    for (int i = 0; i < g.size(); ++i) {
        const Node& n = g.node(i);
        const LayerSpec& s = n.spec;
        auto in0 = [&]() -> const Tensor<T>& { return tape.values[size_t(n.inputs[0])]; };
        Tensor<T> out(shapes[size_t(i)]);
        switch (s.kind) {
            case LayerKind::input:
                out = inputs[next_input++];
                break;
            case LayerKind::conv2d: {
                const Tensor<T>* b = s.bias ? &ps.at(n.name + ".b").value : nullptr;
                kernels::conv2d_forward(s, in0(), ps.at(n.name + ".w").value, b, out);
                break;
            }
            case LayerKind::depthwise_conv2d:
                kernels::depthwise_forward(s, in0(), ps.at(n.name + ".w").value, out);
                break;
            case LayerKind::batchnorm:
                if (mode == RunMode::train)
                    kernels::batchnorm_forward_train(s, in0(), ps.at(n.name + ".gamma").value,
                                                     ps.at(n.name + ".beta").value, ps.at(n.name + ".rmean").value,
                                                     ps.at(n.name + ".rvar").value, out, tape.bn[size_t(i)]);
                else
                    kernels::batchnorm_forward_eval(s, in0(), ps.at(n.name + ".gamma").value,
                                                    ps.at(n.name + ".beta").value, ps.at(n.name + ".rmean").value,
                                                    ps.at(n.name + ".rvar").value, out);
                break;
            case LayerKind::activation:
                kernels::activation_forward(s.act, in0(), out);
                break;
            case LayerKind::squeeze_excite:
                kernels::squeeze_excite_forward(in0(), ps.at(n.name + ".w1").value, ps.at(n.name + ".w2").value, out,
                                                tape.se[size_t(i)]);
                break;
            case LayerKind::global_avg_pool:
                kernels::global_avg_pool_forward(in0(), out);
                break;
            case LayerKind::fully_connected: {
                const Tensor<T>* b = s.bias ? &ps.at(n.name + ".b").value : nullptr;
                kernels::fully_connected_forward(in0(), ps.at(n.name + ".w").value, b, out);
                break;
            }
            case LayerKind::elementwise_add:
                kernels::add_forward(in0(), tape.values[size_t(n.inputs[1])], out);
                break;
            case LayerKind::mse_loss:
                out.data[0] = T(kernels::mse_loss(in0(), tape.values[size_t(n.inputs[1])]));
                break;
            case LayerKind::softmax_cross_entropy:
                out.data[0] = T(kernels::softmax_ce_loss(in0(), tape.values[size_t(n.inputs[1])],
                                                         tape.probs[size_t(i)]));
                break;
        }
        if (mode == RunMode::train) check_finite(out, "node '" + n.name + "'");
        tape.values[size_t(i)] = std::move(out);
    }
    if (mode == RunMode::eval) check_finite(tape.values.back(), "graph output");
    return tape;
}

// Reverse pass. Accumulates into ps gradients (call ps.clear_grads() before
// the first backward of a step; chained tapes accumulate on purpose).
// Returns per-input-node gradients in input order.
template <typename T>
std::vector<Tensor<T>> backward(const Tape<T>& tape, ParameterSet<T>& ps, const Tensor<T>& dout) {
    const Graph& g = *tape.graph;
    if (dout.shape != tape.values.back().shape)
        throw ShapeError("backward seed shape " + shape_str(dout.shape) + " does not match output " +
                         shape_str(tape.values.back().shape));
    std::vector<Tensor<T>> grads(size_t(g.size()));
    std::vector<bool> present(size_t(g.size()), false);
    grads.back() = dout;
    present.back() = true;

    auto need = [&](int idx) -> Tensor<T>& {
        if (!present[size_t(idx)]) {
            grads[size_t(idx)] = Tensor<T>(tape.values[size_t(idx)].shape);
            present[size_t(idx)] = true;
        }
        return grads[size_t(idx)];
    };

    for (int i = g.size() - 1; i >= 0; --i) {
        if (!present[size_t(i)]) continue;
        const Node& n = g.node(i);
        const LayerSpec& s = n.spec;
        const Tensor<T>& dY = grads[size_t(i)];
        auto inval = [&](int k) -> const Tensor<T>& { return tape.values[size_t(n.inputs[size_t(k)])]; };
        switch (s.kind) {
            case LayerKind::input:
                break;
            case LayerKind::conv2d: {
                Tensor<T> dw(ps.at(n.name + ".w").value.shape);
                Tensor<T> dbt;
                Tensor<T>* db = nullptr;
                if (s.bias) {
                    dbt = Tensor<T>(ps.at(n.name + ".b").value.shape);
                    db = &dbt;
                }
                kernels::conv2d_backward(s, inval(0), ps.at(n.name + ".w").value, dY, need(n.inputs[0]), dw, db);
                ps.accumulate_grad(n.name + ".w", std::move(dw));
                if (s.bias) ps.accumulate_grad(n.name + ".b", std::move(dbt));
                break;
            }
            case LayerKind::depthwise_conv2d: {
                Tensor<T> dw(ps.at(n.name + ".w").value.shape);
                kernels::depthwise_backward(s, inval(0), ps.at(n.name + ".w").value, dY, need(n.inputs[0]), dw);
                ps.accumulate_grad(n.name + ".w", std::move(dw));
                break;
            }
            case LayerKind::batchnorm: {
                Tensor<T> dg(ps.at(n.name + ".gamma").value.shape);
                Tensor<T> db(ps.at(n.name + ".beta").value.shape);
                if (tape.mode == RunMode::train)
                    kernels::batchnorm_backward_train(inval(0), ps.at(n.name + ".gamma").value, tape.bn[size_t(i)], dY,
                                                      need(n.inputs[0]), dg, db);
                else
                    kernels::batchnorm_backward_eval(s, inval(0), ps.at(n.name + ".gamma").value,
                                                     ps.at(n.name + ".rmean").value, ps.at(n.name + ".rvar").value, dY,
                                                     need(n.inputs[0]), dg, db);
                ps.accumulate_grad(n.name + ".gamma", std::move(dg));
                ps.accumulate_grad(n.name + ".beta", std::move(db));
                break;
            }
            case LayerKind::activation:
                kernels::activation_backward(s.act, inval(0), dY, need(n.inputs[0]));
                break;
            case LayerKind::squeeze_excite: {
                Tensor<T> dw1(ps.at(n.name + ".w1").value.shape);
                Tensor<T> dw2(ps.at(n.name + ".w2").value.shape);
                kernels::squeeze_excite_backward(inval(0), ps.at(n.name + ".w1").value, ps.at(n.name + ".w2").value,
                                                 tape.se[size_t(i)], dY, need(n.inputs[0]), dw1, dw2);
                ps.accumulate_grad(n.name + ".w1", std::move(dw1));
                ps.accumulate_grad(n.name + ".w2", std::move(dw2));
                break;
            }
            case LayerKind::global_avg_pool:
                kernels::global_avg_pool_backward(inval(0).shape, dY, need(n.inputs[0]));
                break;
            case LayerKind::fully_connected: {
                Tensor<T> dw(ps.at(n.name + ".w").value.shape);
                Tensor<T> dbt;
                Tensor<T>* db = nullptr;
                if (s.bias) {
                    dbt = Tensor<T>(ps.at(n.name + ".b").value.shape);
                    db = &dbt;
                }
                kernels::fully_connected_backward(inval(0), ps.at(n.name + ".w").value, dY, need(n.inputs[0]), dw, db);
                ps.accumulate_grad(n.name + ".w", std::move(dw));
                if (s.bias) ps.accumulate_grad(n.name + ".b", std::move(dbt));
                break;
            }
            case LayerKind::elementwise_add: {
                Tensor<T>& da = need(n.inputs[0]);
                for (int64_t k = 0; k < dY.numel(); ++k) da.data[k] += dY.data[k];
                Tensor<T>& dbt = need(n.inputs[1]);
                for (int64_t k = 0; k < dY.numel(); ++k) dbt.data[k] += dY.data[k];
                break;
            }
            case LayerKind::mse_loss: {
                Tensor<T>& da = need(n.inputs[0]);
                Tensor<T>& dbt = need(n.inputs[1]);
                kernels::mse_backward(inval(0), inval(1), double(dY.data[0]), da, &dbt);
                break;
            }
            case LayerKind::softmax_cross_entropy:
                // labels carry no gradient
                kernels::softmax_ce_backward(tape.probs[size_t(i)], inval(1), double(dY.data[0]), need(n.inputs[0]));
                break;
        }
    }

    std::vector<Tensor<T>> input_grads;
    for (int i = 0; i < g.size(); ++i) {
        if (g.node(i).spec.kind != LayerKind::input) continue;
        if (!present[size_t(i)]) grads[size_t(i)] = Tensor<T>(tape.values[size_t(i)].shape);
        input_grads.push_back(std::move(grads[size_t(i)]));
    }
    return input_grads;
}

// Seeds the reverse pass with d(out)/d(out) = 1 for a scalar-output graph.
template <typename T>
std::vector<Tensor<T>> backward_scalar(const Tape<T>& tape, ParameterSet<T>& ps) {
    if (tape.values.back().numel() != 1)
        throw ShapeError("backward_scalar needs a scalar output, got " + shape_str(tape.values.back().shape));
    Tensor<T> seed(tape.values.back().shape);
    seed.data[0] = T(1);
    return backward(tape, ps, seed);
}

}  // namespace bnas
