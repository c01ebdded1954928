#pragma once

#include <numeric>
#include <vector>

#include "bnas/dataset.hpp"
#include "bnas/graph.hpp"
#include "bnas/optim.hpp"

// Label-supervised training loop shared by the teacher, the end-to-end
// baseline and stand-alone retraining. The train graph ends in a scalar
// loss over (image, labels); the eval graph ends in logits.
namespace bnas {

struct FitConfig {
    int epochs = 30;
    int batch_size = 50;
    OptimRule rule = OptimRule::adam;
    double lr = 3e-3;
    double lr_decay = 0.9;  // multiplicative, per epoch
    double weight_decay = 0.0;
    uint64_t seed = 1;
    bool augment = false;
};

struct FitResult {
    std::vector<double> epoch_mean_loss;
    int64_t steps = 0;
};

template <typename StepHook>
FitResult fit_classifier_hooked(const Graph& train_graph, ParameterSet<float>& ps, const Dataset& train,
                                const FitConfig& fc, StepHook&& hook) {
    FitResult res;
    OptimConfig oc;
    oc.rule = fc.rule;
    oc.lr = fc.lr;
    oc.weight_decay = fc.weight_decay;
    const int64_t n = train.size();
    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int epoch = 0; epoch < fc.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle = Rng::derive(fc.seed, "epoch-shuffle", uint64_t(epoch));
        for (int64_t i = n - 1; i > 0; --i)
            std::swap(order[size_t(i)], order[size_t(shuffle.uniform_int(uint64_t(i + 1)))]);
        Rng aug = Rng::derive(fc.seed, "augment", uint64_t(epoch));
        double loss_sum = 0.0;
        int64_t batches = 0;
        for (int64_t start = 0; start < n; start += fc.batch_size) {
            const int64_t count = std::min<int64_t>(fc.batch_size, n - start);
            TensorF images({count, train.images.shape[1], train.images.shape[2], train.images.shape[3]});
            TensorF labels({count});
            const int64_t px = train.images.numel() / n;
            for (int64_t i = 0; i < count; ++i) {
                const int64_t row = order[size_t(start + i)];
                std::copy_n(train.images.ptr() + row * px, px, images.ptr() + i * px);
                labels.data[size_t(i)] = float(train.labels[size_t(row)]);
            }
            if (fc.augment) augment_batch(images, aug);
            Tape<float> tape = forward(train_graph, {images, labels}, ps, RunMode::train);
            const double loss = double(tape.output().data[0]);
            ps.clear_grads();
            backward_scalar(tape, ps);
            optimizer_step(ps, oc);
            loss_sum += loss;
            batches += 1;
            res.steps += 1;
            hook(epoch, res.steps, loss);
        }
        res.epoch_mean_loss.push_back(loss_sum / double(batches));
        oc.lr *= fc.lr_decay;
    }
    return res;
}

inline FitResult fit_classifier(const Graph& train_graph, ParameterSet<float>& ps, const Dataset& train,
                                const FitConfig& fc) {
    return fit_classifier_hooked(train_graph, ps, train, fc, [](int, int64_t, double) {});
}

// Top-1 accuracy of an eval-mode logits graph.
inline double evaluate_accuracy(const Graph& eval_graph, ParameterSet<float>& ps, const Dataset& ds,
                                int64_t batch_size = 100) {
    const int64_t n = ds.size();
    int64_t correct = 0;
    for (int64_t start = 0; start < n; start += batch_size) {
        const int64_t count = std::min(batch_size, n - start);
        Tape<float> tape = forward(eval_graph, {image_batch(ds, start, count)}, ps, RunMode::eval);
        const TensorF& logits = tape.output();
        const int64_t K = logits.shape[1];
        for (int64_t i = 0; i < count; ++i) {
            int64_t best = 0;
            for (int64_t k = 1; k < K; ++k)
                if (logits.at2(i, k) > logits.at2(i, best)) best = k;
            if (best == ds.labels[size_t(start + i)]) correct += 1;
        }
    }
    return double(correct) / double(n);
}

}  // namespace bnas
