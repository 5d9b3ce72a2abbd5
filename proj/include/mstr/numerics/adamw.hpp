#pragma once

#include <vector>

#include "mstr/numerics/parameter.hpp"

namespace mstr {

struct AdamWConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

// Adam with decoupled weight decay. Moment buffers follow the store's order.
class AdamW {
 public:
  AdamW(const ParameterStore& store, AdamWConfig cfg);

  void step(ParameterStore& store);
  long steps() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  long t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

// Rescales all trainable gradients so their joint L2 norm is at most max_norm.
// Returns the norm before clipping. max_norm <= 0 disables clipping.
double clip_grad_norm(ParameterStore& store, double max_norm);

}  // namespace mstr
