#include <gtest/gtest.h>

#include <string>
#include <utility>
#include <vector>

#include "bnas/gradcheck.hpp"
#include "bnas/layers.hpp"

using namespace bnas;

namespace {

constexpr int kTrials = 20;
constexpr double kTol = 1e-6;
constexpr double kBnTrainTol = 1e-5;  // batch statistics couple every element

void expect_grads_ok(const LayerSpec& s, const std::string& label, double tol = kTol,
                     RunMode mode = RunMode::train) {
    const GradCheckReport rep = grad_check(s, kTrials, 7, mode);
    EXPECT_LT(rep.max_rel_err, tol) << label;
    EXPECT_GT(rep.probes, 0) << label;
}

}  // namespace

TEST(GradCheck, Conv2d) {
    expect_grads_ok(conv2d_spec(3, 4, 3, 1), "k3 s1");
    expect_grads_ok(conv2d_spec(3, 4, 3, 2), "k3 s2");
    expect_grads_ok(conv2d_spec(3, 2, 5, 1), "k5 s1");
    expect_grads_ok(conv2d_spec(3, 2, 1, 1), "pointwise");
    expect_grads_ok(conv2d_spec(3, 4, 3, 1, -1, true), "k3 bias");
}

TEST(GradCheck, DepthwiseConv2d) {
    expect_grads_ok(depthwise_spec(3, 3, 1), "k3 s1");
    expect_grads_ok(depthwise_spec(3, 3, 2), "k3 s2");
    expect_grads_ok(depthwise_spec(3, 5, 1), "k5 s1");
    expect_grads_ok(depthwise_spec(3, 5, 2), "k5 s2");
}

TEST(GradCheck, BatchNorm) {
    expect_grads_ok(batchnorm_spec(3), "train", kBnTrainTol, RunMode::train);
    expect_grads_ok(batchnorm_spec(3), "eval", kTol, RunMode::eval);
}

TEST(GradCheck, Activations) {
    expect_grads_ok(activation_spec(Act::relu), "relu");
    expect_grads_ok(activation_spec(Act::sigmoid), "sigmoid");
    expect_grads_ok(activation_spec(Act::swish), "swish");
}

TEST(GradCheck, SqueezeExcite) {
    expect_grads_ok(squeeze_excite_spec(3, 1), "reduce to 1");
    expect_grads_ok(squeeze_excite_spec(3, 2), "reduce to 2");
}

TEST(GradCheck, GlobalAvgPool) { expect_grads_ok(global_avg_pool_spec(), "gap"); }

TEST(GradCheck, FullyConnected) {
    expect_grads_ok(fully_connected_spec(6, 4, true), "bias");
    expect_grads_ok(fully_connected_spec(6, 4, false), "no bias");
}

TEST(GradCheck, ElementwiseAdd) { expect_grads_ok(add_spec(), "add"); }

TEST(GradCheck, MseLoss) { expect_grads_ok(mse_loss_spec(), "mse"); }

TEST(GradCheck, SoftmaxCrossEntropy) { expect_grads_ok(softmax_ce_spec(), "softmax-ce"); }

TEST(GradCheck, InputNodeIsRejected) {
    LayerSpec s;
    s.kind = LayerKind::input;
    EXPECT_THROW(grad_check(s, 1), ConfigError);
}
