#include <cmath>

#include "doctest.h"
#include "mgan/losses.hpp"
#include "mgan/rng.hpp"
#include "testutil.hpp"

using namespace mgan;
using namespace mgan::testutil;

namespace {
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

TEST_CASE("softplus matches its definition and survives extreme inputs") {
    CHECK(softplus(0.0) == doctest::Approx(0.6931471805599453).epsilon(1e-12));
    CHECK(softplus(-10.0) == doctest::Approx(4.539889921686465e-05).epsilon(1e-9));
    CHECK(softplus(1000.0) == doctest::Approx(1000.0));   // naive exp would overflow
    CHECK(softplus(-1000.0) == doctest::Approx(0.0));
    CHECK(std::isfinite(softplus(705.0)));
    for (double x : {-3.0, -0.5, 0.7, 4.0})
        CHECK(softplus(x) == doctest::Approx(std::log1p(std::exp(x))).epsilon(1e-12));
}

TEST_CASE("reference losses at zero logits hit the coin-flip values") {
    Tensor real(1, 3, 3), fake(1, 3, 3);  // all zeros
    GanLossPair pair = gan_loss_reference(real, fake);
    CHECK(pair.d_loss == doctest::Approx(1.3862943611198906).epsilon(1e-12));
    CHECK(pair.g_loss == doctest::Approx(0.6931471805599453).epsilon(1e-12));
}

TEST_CASE("reference losses match elementwise cross-entropy on random logits") {
    Rng rng(5);
    Tensor real = random_tensor(1, 3, 3, rng, -4.0, 4.0);
    Tensor fake = random_tensor(1, 3, 3, rng, -4.0, 4.0);
    GanLossPair pair = gan_loss_reference(real, fake);

    double d = 0.0, g = 0.0;
    for (size_t i = 0; i < real.size(); ++i) {
        d += -std::log(sigmoid(real.data[i])) - std::log(1.0 - sigmoid(fake.data[i]));
        g += -std::log(sigmoid(fake.data[i]));
    }
    CHECK(pair.d_loss == doctest::Approx(d / double(real.size())).epsilon(1e-12));
    CHECK(pair.g_loss == doctest::Approx(g / double(fake.size())).epsilon(1e-12));
}

TEST_CASE("a confident discriminator drives the adversarial loss toward zero") {
    Tensor real(1, 2, 2), fake(1, 2, 2);
    for (double& v : real.data) v = 10.0;
    for (double& v : fake.data) v = -10.0;
    GanLossPair pair = gan_loss_reference(real, fake);
    CHECK(pair.d_loss == doctest::Approx(9.07977984337293e-05).epsilon(1e-9));

    // Raising real logits can only lower the discriminator loss.
    Tensor real_low(1, 2, 2);
    for (double& v : real_low.data) v = -1.0;
    CHECK(gan_loss_reference(real_low, fake).d_loss > pair.d_loss);
}

TEST_CASE("logit gradient formulas match finite differences") {
    Rng rng(6);
    Tensor logits = random_tensor(1, 3, 3, rng, -3.0, 3.0);
    const double n = double(logits.size());

    Tensor gr = d_loss_grad_real(logits);
    Tensor gf = d_loss_grad_fake(logits);
    Tensor ga = g_adv_grad(logits);
    for (size_t i = 0; i < logits.size(); ++i) {
        CHECK(gr.data[i] == doctest::Approx(-sigmoid(-logits.data[i]) / n).epsilon(1e-12));
        CHECK(gf.data[i] == doctest::Approx(sigmoid(logits.data[i]) / n).epsilon(1e-12));
        CHECK(ga.data[i] == doctest::Approx(-sigmoid(-logits.data[i]) / n).epsilon(1e-12));

        auto mean_sp_neg = [&]() {
            double s = 0.0;
            for (double v : logits.data) s += softplus(-v);
            return s / n;
        };
        const double fd = central_diff(mean_sp_neg, &logits.data[i], 1e-6);
        CHECK(grad_close(gr.data[i], fd, 1e-6));
    }
}

TEST_CASE("l1 gradient is the scaled sign of the residual") {
    Tensor fake(1, 2, 2), real(1, 2, 2);
    fake.data = {0.5, -0.5, 0.2, 0.2};
    real.data = {0.0, 0.0, 0.2, 0.6};
    Tensor g = l1_grad(fake, real, 100.0);
    CHECK(g.data[0] == doctest::Approx(25.0));   // +lambda/N
    CHECK(g.data[1] == doctest::Approx(-25.0));
    CHECK(g.data[2] == doctest::Approx(0.0));    // exact tie contributes nothing
    CHECK(g.data[3] == doctest::Approx(-25.0));
}

TEST_CASE("generator loss splits into adversarial and weighted l1 parts") {
    Rng rng(7);
    DiscriminatorSpec spec;
    spec.image_size = 8;
    spec.base_width = 4;
    spec.mode = ChannelMode::LB;
    Rng init(71);
    Discriminator disc(spec, init);

    Tensor cond = random_tensor(1, 8, 8, rng);
    Tensor real = random_tensor(1, 8, 8, rng);
    Tensor fake = real;
    for (double& v : fake.data) v += 0.1;  // mean abs residual exactly 0.1

    LossConfig cfg;  // lambda 100
    GLossParts parts = mgan_g_loss(disc, cond, fake, real, cfg);
    CHECK(parts.l1 == doctest::Approx(0.1).epsilon(1e-9));  // raw term, pre-lambda
    CHECK(parts.total ==
          doctest::Approx(parts.adversarial + cfg.lambda_l1 * parts.l1).epsilon(1e-12));

    LossConfig off;
    off.lambda_l1 = 0.0;
    GLossParts bare = mgan_g_loss(disc, cond, fake, real, off);
    CHECK(bare.l1 == doctest::Approx(0.1).epsilon(1e-9));
    CHECK(bare.total == doctest::Approx(bare.adversarial).epsilon(1e-12));
    CHECK(bare.adversarial == doctest::Approx(parts.adversarial).epsilon(1e-12));

    LossConfig heavy;
    heavy.lambda_l1 = 200.0;
    CHECK(mgan_g_loss(disc, cond, fake, real, heavy).total > parts.total);
}

TEST_CASE("weighted bce matches a hand-computed example") {
    Tensor logits(1, 2, 2), target(1, 2, 2);
    logits.data = {0.5, -1.2, 2.0, 0.0};
    target.data = {1.0, 0.0, 1.0, 0.0};
    BceResult r = weighted_bce_with_logits(logits, target, 3.0);
    CHECK(r.loss == doctest::Approx(0.6898611583918037).epsilon(1e-12));
    CHECK(r.grad.data[0] == doctest::Approx(-0.283155501598609).epsilon(1e-12));
    CHECK(r.grad.data[1] == doctest::Approx(0.057868804125245595).epsilon(1e-12));
    CHECK(r.grad.data[2] == doctest::Approx(-0.08940219151658826).epsilon(1e-12));
    CHECK(r.grad.data[3] == doctest::Approx(0.125).epsilon(1e-12));

    // pos_weight 1 reduces to plain bce; perfect confident predictions
    // drive it to ~0.
    Tensor sharp(1, 2, 2);
    sharp.data = {30.0, -30.0, 30.0, -30.0};
    CHECK(weighted_bce_with_logits(sharp, target, 1.0).loss == doctest::Approx(0.0));
}

TEST_CASE("noise vector sampling is sized and seeded correctly") {
    Rng rng(11);
    NoiseVector z = NoiseVector::sample(rng, 100);
    CHECK(z.values.size() == 100);

    Rng rng2(11);
    NoiseVector z2 = NoiseVector::sample(rng2, 100);
    CHECK(z.values == z2.values);

    double sum = 0.0, sumsq = 0.0;
    Rng rng3(12);
    NoiseVector big = NoiseVector::sample(rng3, 50000);
    for (double v : big.values) {
        sum += v;
        sumsq += v * v;
    }
    const double mean = sum / double(big.values.size());
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(sumsq / double(big.values.size()) - mean * mean - 1.0) < 0.03);
}
