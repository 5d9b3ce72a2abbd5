#include "mstr/numerics/adamw.hpp"

#include <cmath>

namespace mstr {

AdamW::AdamW(const ParameterStore& store, AdamWConfig cfg) : cfg_(cfg) {
  for (const auto& p : store.parameters()) {
    m_.emplace_back(p.var.value().shape(), 0.0);
    v_.emplace_back(p.var.value().shape(), 0.0);
  }
}

void AdamW::step(ParameterStore& store) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  auto& params = store.parameters();
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    if (!p.trainable || !p.var.has_grad()) continue;
    Tensor& w = p.var.mutable_value();
    const Tensor& g = p.var.grad();
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[i]);
    }
  }
}

double clip_grad_norm(ParameterStore& store, double max_norm) {
  double sq = 0;
  for (const auto& p : store.parameters())
    if (p.trainable && p.var.has_grad())
      for (double g : p.var.grad().values()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const double s = max_norm / (norm + 1e-12);
    for (auto& p : store.parameters())
      if (p.trainable && p.var.has_grad())
        for (auto& g : p.var.mutable_grad().values()) g *= s;
  }
  return norm;
}

}  // namespace mstr
