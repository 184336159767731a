#pragma once
#include <cstdint>

#include "mgan/layers.hpp"

namespace mgan {

struct AdamConfig {
    double learning_rate = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
        if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must be in [0,1)");
        if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must be in [0,1)");
    }
};

// Adam over a fixed parameter list; update order is registration order,
// so runs are reproducible.
class Adam {
  public:
    Adam(const AdamConfig& cfg, std::vector<ParamRef> params);

    void zero_grads();
    void step();
    int64_t steps() const { return t_; }

  private:
    AdamConfig cfg_;
    std::vector<ParamRef> params_;
    std::vector<std::vector<double>> m_, v_;
    int64_t t_ = 0;
};

}  // namespace mgan
