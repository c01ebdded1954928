#pragma once

#include <cmath>
#include <string>

#include "bnas/errors.hpp"
#include "bnas/graph.hpp"

namespace bnas {

enum class OptimRule { adam, rmsprop, sgd };

inline const char* optim_rule_name(OptimRule r) {
    switch (r) {
        case OptimRule::adam: return "adam";
        case OptimRule::rmsprop: return "rmsprop";
        case OptimRule::sgd: return "sgd";
    }
    return "?";
}

inline OptimRule parse_optim_rule(const std::string& s) {
    if (s == "adam") return OptimRule::adam;
    if (s == "rmsprop") return OptimRule::rmsprop;
    if (s == "sgd") return OptimRule::sgd;
    throw ConfigError("unknown optimizer rule '" + s + "'");
}

struct OptimConfig {
    OptimRule rule = OptimRule::adam;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double rho = 0.9;           // rmsprop decay
    double momentum = 0.0;      // sgd
    double weight_decay = 0.0;  // coupled L2, added to the gradient
};

// Applies one update to every trainable parameter that accumulated a
// gradient this step. Parameters the tape never touched are left alone,
// including their step counters, which is what keeps unsampled supernet
// paths bit-identical. Moment buffers are allocated on first use.
template <typename T>
void optimizer_step(ParameterSet<T>& ps, const OptimConfig& h) {
    bool any = false;
    for (auto& [name, p] : ps.raw()) {
        (void)name;
        if (!p.trainable || !p.has_grad) continue;
        any = true;
        p.step += 1;
        const int64_t n = p.value.numel();
        switch (h.rule) {
            case OptimRule::adam: {
                if (p.m.numel() != n) p.m = Tensor<T>(p.value.shape);
                if (p.v.numel() != n) p.v = Tensor<T>(p.value.shape);
                const double bc1 = 1.0 - std::pow(h.beta1, double(p.step));
                const double bc2 = 1.0 - std::pow(h.beta2, double(p.step));
                for (int64_t i = 0; i < n; ++i) {
                    double g = double(p.grad.data[i]) + h.weight_decay * double(p.value.data[i]);
                    const double m = h.beta1 * double(p.m.data[i]) + (1.0 - h.beta1) * g;
                    const double v = h.beta2 * double(p.v.data[i]) + (1.0 - h.beta2) * g * g;
                    p.m.data[i] = T(m);
                    p.v.data[i] = T(v);
                    p.value.data[i] = T(double(p.value.data[i]) - h.lr * (m / bc1) / (std::sqrt(v / bc2) + h.eps));
                }
                break;
            }
            case OptimRule::rmsprop: {
                if (p.v.numel() != n) p.v = Tensor<T>(p.value.shape);
                for (int64_t i = 0; i < n; ++i) {
                    double g = double(p.grad.data[i]) + h.weight_decay * double(p.value.data[i]);
                    const double v = h.rho * double(p.v.data[i]) + (1.0 - h.rho) * g * g;
                    p.v.data[i] = T(v);
                    p.value.data[i] = T(double(p.value.data[i]) - h.lr * g / (std::sqrt(v) + h.eps));
                }
                break;
            }
            case OptimRule::sgd: {
                const bool use_mom = h.momentum != 0.0;
                if (use_mom && p.m.numel() != n) p.m = Tensor<T>(p.value.shape);
                for (int64_t i = 0; i < n; ++i) {
                    double g = double(p.grad.data[i]) + h.weight_decay * double(p.value.data[i]);
                    if (use_mom) {
                        const double m = h.momentum * double(p.m.data[i]) + g;
                        p.m.data[i] = T(m);
                        g = m;
                    }
                    p.value.data[i] = T(double(p.value.data[i]) - h.lr * g);
                }
                break;
            }
        }
    }
    if (!any) throw ConfigError("optimizer_step: no parameter has a gradient");
}

}  // namespace bnas
