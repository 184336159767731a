#pragma once
#include "mgan/networks.hpp"

namespace mgan {

struct LossConfig {
    double lambda_l1 = 100.0;

    void validate() const {
        if (!(lambda_l1 >= 0.0)) throw ConfigError("lambda_l1 must be >= 0");
    }
};

// log(1+e^x), computed without overflow.
double softplus(double x);

// Classic two-player objective on discriminator logits, in its
// numerically stable softplus form:
//   d_loss = mean softplus(-real) + mean softplus(fake)
//   g_loss = mean softplus(-fake)          (non-saturating generator side)
struct GanLossPair {
    double d_loss = 0.0;
    double g_loss = 0.0;
};
GanLossPair gan_loss_reference(const Tensor& real_logits, const Tensor& fake_logits);

// Latent input of the unconditional reference formulation. The image
// models condition on label/CT planes instead and get their stochasticity
// from dropout, so this type appears only in reference-path tests.
struct NoiseVector {
    std::vector<double> values;
    static NoiseVector sample(Rng& rng, size_t length);
};

// Scalar losses as pure functions of frozen networks (inference forwards;
// no state is touched), convenient for finite-difference checks.
double mgan_d_loss(const Discriminator& disc, const Tensor& cond, const Tensor& real_pet,
                   const Tensor& fake_pet);

struct GLossParts {
    double total = 0.0;
    double adversarial = 0.0;
    double l1 = 0.0;
};
GLossParts mgan_g_loss(const Discriminator& disc, const Tensor& cond, const Tensor& fake_pet,
                       const Tensor& real_pet, const LossConfig& cfg);

// Analytic d(loss)/d(logits) pieces the training loop backpropagates.
Tensor d_loss_grad_real(const Tensor& real_logits);
Tensor d_loss_grad_fake(const Tensor& fake_logits);
Tensor g_adv_grad(const Tensor& fake_logits);
// d(lambda * mean|fake - real|)/d(fake)
Tensor l1_grad(const Tensor& fake, const Tensor& real, double lambda);

// Per-pixel binary cross-entropy on logits with a positive-class weight;
// mean over pixels of w*(softplus(z) - z*y), w = pos_weight where y=1.
struct BceResult {
    double loss = 0.0;
    Tensor grad;  // d(loss)/d(logits)
};
BceResult weighted_bce_with_logits(const Tensor& logits, const Tensor& target, double pos_weight);

}  // namespace mgan
