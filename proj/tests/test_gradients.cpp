#include <cmath>
#include <vector>

#include "doctest.h"
#include "mgan/layers.hpp"
#include "mgan/losses.hpp"
#include "mgan/networks.hpp"
#include "mgan/rng.hpp"
#include "mgan/tensor.hpp"
#include "testutil.hpp"

using namespace mgan;
using namespace mgan::testutil;

namespace {

constexpr double kStep = 1e-5;
constexpr double kRelTol = 1e-4;

// Check every parameter (when the layer has any) plus the input tensor
// against central finite differences of the scalar loss sum(w * layer(x)).
template <typename Layer>
void check_layer(Layer& layer, Tensor& x, const Tensor& w, int out_c, int out_h, int out_w) {
    auto loss = [&]() {
        Tensor y = layer.forward(x);
        return weighted_sum(y, w);
    };

    Tensor y = layer.forward_train(x);
    REQUIRE(y.channels == out_c);
    REQUIRE(y.height == out_h);
    REQUIRE(y.width == out_w);
    Tensor gy = w;
    if constexpr (requires { layer.params(); }) {
        for (auto ref : layer.params())
            for (double& g : *ref.grads) g = 0.0;
    }
    Tensor gx = layer.backward(gy);

    if constexpr (requires { layer.params(); }) {
        for (auto ref : layer.params()) {
            for (size_t i = 0; i < ref.values->size(); ++i) {
                const double fd = central_diff(loss, &(*ref.values)[i], kStep);
                CAPTURE(ref.name);
                CAPTURE(i);
                CHECK(grad_close((*ref.grads)[i], fd, kRelTol));
            }
        }
    }
    for (size_t i = 0; i < x.size(); ++i) {
        const double fd = central_diff(loss, &x.data[i], kStep);
        CAPTURE(i);
        CHECK(grad_close(gx.data[i], fd, kRelTol));
    }
}

}  // namespace

TEST_CASE("conv2d stride-2 gradients match finite differences") {
    Rng rng(11);
    Conv2d conv("c", 3, 2, 4, 2, Pad::uniform(1));
    for (auto ref : conv.params())
        for (double& v : *ref.values) v = rng.uniform(-0.5, 0.5);
    Tensor x = random_tensor(3, 8, 8, rng);
    Tensor w = random_tensor(2, 4, 4, rng);
    check_layer(conv, x, w, 2, 4, 4);
}

TEST_CASE("conv2d stride-1 asymmetric-pad gradients match finite differences") {
    Rng rng(12);
    Conv2d conv("c", 2, 3, 4, 1, Pad{1, 2, 1, 2});
    for (auto ref : conv.params())
        for (double& v : *ref.values) v = rng.uniform(-0.5, 0.5);
    Tensor x = random_tensor(2, 6, 6, rng);
    Tensor w = random_tensor(3, 6, 6, rng);
    check_layer(conv, x, w, 3, 6, 6);
}

TEST_CASE("conv_transpose2d gradients match finite differences") {
    Rng rng(13);
    ConvTranspose2d deconv("d", 3, 2, 4, 2, 1);
    for (auto ref : deconv.params())
        for (double& v : *ref.values) v = rng.uniform(-0.5, 0.5);
    Tensor x = random_tensor(3, 4, 4, rng);
    Tensor w = random_tensor(2, 8, 8, rng);
    check_layer(deconv, x, w, 2, 8, 8);
}

TEST_CASE("instance norm gradients match finite differences") {
    Rng rng(14);
    InstanceNorm norm("n", 3);
    for (auto ref : norm.params())
        for (double& v : *ref.values) v = rng.uniform(0.5, 1.5);
    Tensor x = random_tensor(3, 5, 5, rng);
    Tensor w = random_tensor(3, 5, 5, rng);
    check_layer(norm, x, w, 3, 5, 5);
}

TEST_CASE("instance norm passes through unchanged at 1x1 spatial extent") {
    Rng rng(15);
    InstanceNorm norm("n", 4);
    Tensor x = random_tensor(4, 1, 1, rng);
    Tensor y = norm.forward_train(x);
    for (size_t i = 0; i < x.size(); ++i) CHECK(y.data[i] == doctest::Approx(x.data[i]));
    Tensor gy = random_tensor(4, 1, 1, rng);
    Tensor gx = norm.backward(gy);
    for (size_t i = 0; i < gy.size(); ++i) CHECK(gx.data[i] == doctest::Approx(gy.data[i]));
}

TEST_CASE("leaky relu and tanh gradients match finite differences") {
    Rng rng(16);
    LeakyReLU act(0.2);
    Tensor x = random_tensor(2, 4, 4, rng);
    Tensor w = random_tensor(2, 4, 4, rng);
    check_layer(act, x, w, 2, 4, 4);

    Tanh th;
    Tensor x2 = random_tensor(2, 4, 4, rng);
    Tensor w2 = random_tensor(2, 4, 4, rng);
    check_layer(th, x2, w2, 2, 4, 4);
}

TEST_CASE("dropout scales surviving activations and reuses its mask in backward") {
    Rng rng(17);
    Dropout drop(0.5);
    Tensor x = random_tensor(1, 16, 16, rng, 0.5, 1.5);

    Rng drop_rng(99);
    Tensor y = drop.forward_train(x, drop_rng);
    int kept = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        if (y.data[i] != 0.0) {
            ++kept;
            CHECK(y.data[i] == doctest::Approx(x.data[i] * 2.0));
        }
    }
    CHECK(kept > 0);
    CHECK(kept < int(x.size()));

    // Backward must reuse the identical mask: gradient flows exactly where
    // activations survived, scaled by the same 1/(1-rate).
    Tensor gy(1, 16, 16);
    for (double& v : gy.data) v = 1.0;
    Tensor gx = drop.backward(gy);
    for (size_t i = 0; i < x.size(); ++i) {
        if (y.data[i] == 0.0)
            CHECK(gx.data[i] == 0.0);
        else
            CHECK(gx.data[i] == doctest::Approx(2.0));
    }

    // Inference mode is the identity.
    Tensor yi = drop.forward(x);
    for (size_t i = 0; i < x.size(); ++i) CHECK(yi.data[i] == doctest::Approx(x.data[i]));
}

TEST_CASE("generator backward matches finite differences through dropout") {
    GeneratorSpec spec;
    spec.image_size = 8;
    spec.base_width = 4;
    spec.mode = ChannelMode::M;
    Rng init(21);
    Generator gen(spec, init);

    Rng rng(22);
    Tensor cond = random_tensor(cond_channels(spec.mode), 8, 8, rng);
    Tensor w = random_tensor(1, 8, 8, rng);

    // Dropout draws exactly one uniform per element regardless of values, so
    // replaying from a fixed seed makes the perturbed losses see the same mask.
    auto loss = [&]() {
        Rng drop_rng(123);
        Tensor y = gen.forward_train(cond, drop_rng);
        return weighted_sum(y, w);
    };

    Rng drop_rng(123);
    Tensor y = gen.forward_train(cond, drop_rng);
    auto opt_params = gen.params();
    for (auto ref : opt_params)
        for (double& g : *ref.grads) g = 0.0;
    gen.backward(w);

    Rng pick(23);
    int checked = 0;
    for (auto ref : opt_params) {
        for (int k = 0; k < 4; ++k) {
            const size_t i = pick.uniform_index(ref.values->size());
            const double fd = central_diff(loss, &(*ref.values)[i], kStep);
            CAPTURE(ref.name);
            CAPTURE(i);
            CHECK(grad_close((*ref.grads)[i], fd, kRelTol));
            ++checked;
        }
    }
    CHECK(checked >= 40);
}

TEST_CASE("discriminator loss gradients match finite differences") {
    DiscriminatorSpec spec;
    spec.image_size = 8;
    spec.base_width = 4;
    spec.mode = ChannelMode::M;
    Rng init(31);
    Discriminator disc(spec, init);

    Rng rng(32);
    Tensor cond = random_tensor(cond_channels(spec.mode), 8, 8, rng);
    Tensor real = random_tensor(1, 8, 8, rng);
    Tensor fake = random_tensor(1, 8, 8, rng);

    auto loss = [&]() { return mgan_d_loss(disc, cond, real, fake); };

    auto params = disc.params();
    for (auto ref : params)
        for (double& g : *ref.grads) g = 0.0;

    Tensor r_logits = disc.forward_train(cond, real);
    disc.backward(d_loss_grad_real(r_logits));
    Tensor f_logits = disc.forward_train(cond, fake);
    disc.backward(d_loss_grad_fake(f_logits));

    Rng pick(33);
    for (auto ref : params) {
        for (int k = 0; k < 4; ++k) {
            const size_t i = pick.uniform_index(ref.values->size());
            const double fd = central_diff(loss, &(*ref.values)[i], kStep);
            CAPTURE(ref.name);
            CAPTURE(i);
            CHECK(grad_close((*ref.grads)[i], fd, kRelTol));
        }
    }
}

TEST_CASE("generator loss gradients match finite differences through the discriminator") {
    GeneratorSpec gspec;
    gspec.image_size = 8;
    gspec.base_width = 4;
    gspec.mode = ChannelMode::LB;
    Rng ginit(41);
    Generator gen(gspec, ginit);

    DiscriminatorSpec dspec;
    dspec.image_size = 8;
    dspec.base_width = 4;
    dspec.mode = ChannelMode::LB;
    Rng dinit(42);
    Discriminator disc(dspec, dinit);

    Rng rng(43);
    Tensor cond = random_tensor(1, 8, 8, rng);
    Tensor real = random_tensor(1, 8, 8, rng);
    LossConfig loss_cfg;

    auto loss = [&]() {
        Rng drop_rng(123);
        Tensor fake = gen.forward_train(cond, drop_rng);
        return mgan_g_loss(disc, cond, fake, real, loss_cfg).total;
    };

    Rng drop_rng(123);
    Tensor fake = gen.forward_train(cond, drop_rng);
    Tensor logits = disc.forward_train(cond, fake);

    auto gparams = gen.params();
    for (auto ref : gparams)
        for (double& g : *ref.grads) g = 0.0;

    Tensor dfake = disc.backward(g_adv_grad(logits));
    Tensor l1g = l1_grad(fake, real, loss_cfg.lambda_l1);
    for (size_t i = 0; i < dfake.size(); ++i) dfake.data[i] += l1g.data[i];
    gen.backward(dfake);

    Rng pick(44);
    for (auto ref : gparams) {
        for (int k = 0; k < 4; ++k) {
            const size_t i = pick.uniform_index(ref.values->size());
            const double fd = central_diff(loss, &(*ref.values)[i], kStep);
            CAPTURE(ref.name);
            CAPTURE(i);
            CHECK(grad_close((*ref.grads)[i], fd, kRelTol));
        }
    }
}

TEST_CASE("detector loss gradients match finite differences") {
    DetectorSpec spec;
    spec.image_size = 8;
    spec.base_width = 4;
    Rng init(51);
    Detector det(spec, init);

    Rng rng(52);
    Tensor pet = random_tensor(1, 8, 8, rng, 0.0, 1.0);
    Tensor target(1, 8, 8);
    for (double& v : target.data) v = rng.uniform(0.0, 1.0) > 0.7 ? 1.0 : 0.0;
    const double pos_weight = 8.0;

    auto loss = [&]() {
        Tensor logits = det.logits(pet);
        return weighted_bce_with_logits(logits, target, pos_weight).loss;
    };

    Tensor logits = det.logits_train(pet);
    auto params = det.params();
    for (auto ref : params)
        for (double& g : *ref.grads) g = 0.0;
    det.backward(weighted_bce_with_logits(logits, target, pos_weight).grad);

    Rng pick(53);
    for (auto ref : params) {
        for (int k = 0; k < 4; ++k) {
            const size_t i = pick.uniform_index(ref.values->size());
            const double fd = central_diff(loss, &(*ref.values)[i], kStep);
            CAPTURE(ref.name);
            CAPTURE(i);
            CHECK(grad_close((*ref.grads)[i], fd, kRelTol));
        }
    }
}
