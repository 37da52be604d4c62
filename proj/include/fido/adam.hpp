#pragma once

#include <vector>

#include "fido/tensor.hpp"

namespace fido {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam over a fixed group of parameter tensors. The slot layout is fixed by
// the first step() call; callers pass the same parameter order every step.
class Adam {
  public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    // One update with the configured learning rate.
    void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads);

    // One update with an externally scheduled learning rate.
    void step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
              double learning_rate);

    const AdamConfig& config() const { return cfg_; }

  private:
    struct Slot {
        Tensor m, v;
    };
    AdamConfig cfg_;
    std::vector<Slot> slots_;
    long t_ = 0;
};

}  // namespace fido
