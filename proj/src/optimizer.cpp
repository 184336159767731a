#include "mgan/optimizer.hpp"

#include <cmath>

namespace mgan {

Adam::Adam(const AdamConfig& cfg, std::vector<ParamRef> params)
    : cfg_(cfg), params_(std::move(params)) {
    cfg_.validate();
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
        m_.emplace_back(p.values->size(), 0.0);
        v_.emplace_back(p.values->size(), 0.0);
    }
}

void Adam::zero_grads() {
    for (auto& p : params_) std::fill(p.grads->begin(), p.grads->end(), 0.0);
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (size_t k = 0; k < params_.size(); ++k) {
        auto& w = *params_[k].values;
        const auto& g = *params_[k].grads;
        auto& m = m_[k];
        auto& v = v_[k];
        for (size_t i = 0; i < w.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace mgan
