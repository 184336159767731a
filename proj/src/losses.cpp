#include "mgan/losses.hpp"

#include <cmath>

namespace mgan {

double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double mean_softplus(const Tensor& t, double sign) {
    double s = 0.0;
    for (double v : t.data) s += softplus(sign * v);
    return s / double(t.size());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) throw ValidationError(std::string(what) + ": shape mismatch");
}

}  // namespace

GanLossPair gan_loss_reference(const Tensor& real_logits, const Tensor& fake_logits) {
    if (real_logits.size() == 0 || fake_logits.size() == 0)
        throw ValidationError("gan_loss_reference: empty logits");
    GanLossPair out;
    out.d_loss = mean_softplus(real_logits, -1.0) + mean_softplus(fake_logits, 1.0);
    out.g_loss = mean_softplus(fake_logits, -1.0);
    return out;
}

NoiseVector NoiseVector::sample(Rng& rng, size_t length) {
    NoiseVector z;
    z.values.resize(length);
    for (double& v : z.values) v = rng.gaussian();
    return z;
}

double mgan_d_loss(const Discriminator& disc, const Tensor& cond, const Tensor& real_pet,
                   const Tensor& fake_pet) {
    require_same_shape(real_pet, fake_pet, "mgan_d_loss");
    const Tensor real_logits = disc.forward(cond, real_pet);
    const Tensor fake_logits = disc.forward(cond, fake_pet);
    return gan_loss_reference(real_logits, fake_logits).d_loss;
}

GLossParts mgan_g_loss(const Discriminator& disc, const Tensor& cond, const Tensor& fake_pet,
                       const Tensor& real_pet, const LossConfig& cfg) {
    cfg.validate();
    require_same_shape(real_pet, fake_pet, "mgan_g_loss");
    GLossParts out;
    const Tensor fake_logits = disc.forward(cond, fake_pet);
    out.adversarial = mean_softplus(fake_logits, -1.0);
    double s = 0.0;
    for (size_t i = 0; i < fake_pet.size(); ++i) s += std::abs(fake_pet.data[i] - real_pet.data[i]);
    out.l1 = s / double(fake_pet.size());
    out.total = out.adversarial + cfg.lambda_l1 * out.l1;
    return out;
}

Tensor d_loss_grad_real(const Tensor& real_logits) {
    Tensor g = real_logits;
    const double n = double(g.size());
    for (double& v : g.data) v = -sigmoid(-v) / n;
    return g;
}

Tensor d_loss_grad_fake(const Tensor& fake_logits) {
    Tensor g = fake_logits;
    const double n = double(g.size());
    for (double& v : g.data) v = sigmoid(v) / n;
    return g;
}

Tensor g_adv_grad(const Tensor& fake_logits) {
    Tensor g = fake_logits;
    const double n = double(g.size());
    for (double& v : g.data) v = -sigmoid(-v) / n;
    return g;
}

Tensor l1_grad(const Tensor& fake, const Tensor& real, double lambda) {
    require_same_shape(fake, real, "l1_grad");
    Tensor g = fake;
    const double scale = lambda / double(fake.size());
    for (size_t i = 0; i < g.size(); ++i) {
        const double d = fake.data[i] - real.data[i];
        g.data[i] = d > 0.0 ? scale : (d < 0.0 ? -scale : 0.0);
    }
    return g;
}

BceResult weighted_bce_with_logits(const Tensor& logits, const Tensor& target, double pos_weight) {
    require_same_shape(logits, target, "weighted_bce_with_logits");
    if (!(pos_weight > 0.0)) throw ConfigError("pos_weight must be positive");
    BceResult out;
    out.grad = logits;
    const double n = double(logits.size());
    double loss = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        const double z = logits.data[i];
        const double y = target.data[i];
        const double w = y > 0.5 ? pos_weight : 1.0;
        loss += w * (softplus(z) - z * y);
        out.grad.data[i] = w * (sigmoid(z) - y) / n;
    }
    out.loss = loss / n;
    return out;
}

}  // namespace mgan
