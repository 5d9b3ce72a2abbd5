#include "mstr/numerics/parameter.hpp"

#include <cmath>

#include "mstr/errors.hpp"
#include "mstr/numerics/ops.hpp"

namespace mstr {

Var ParameterStore::create(const std::string& name, Tensor init, bool trainable) {
  if (find(name)) throw ConfigError("duplicate parameter name: " + name);
  Var v = Var::leaf(std::move(init), trainable);
  params_.push_back({name, v, trainable});
  return v;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

Parameter* ParameterStore::find(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

Var ParameterStore::get(const std::string& name) const {
  const Parameter* p = find(name);
  if (!p) throw ConfigError("unknown parameter: " + name);
  return p->var;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var.value().size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

Tensor kaiming_uniform(Shape shape, int fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

Linear::Linear(ParameterStore& store, const std::string& name, int in, int out, Rng& rng,
               bool with_bias) {
  weight = store.create(name + ".weight", kaiming_uniform({out, in}, in, rng));
  if (with_bias) bias = store.create(name + ".bias", kaiming_uniform({out}, in, rng));
}

Var Linear::operator()(const Var& x) const { return ops::linear(x, weight, bias); }

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, int dim) {
  gamma = store.create(name + ".gamma", Tensor({dim}, 1.0));
  beta = store.create(name + ".beta", Tensor({dim}, 0.0));
}

Var LayerNorm::operator()(const Var& x) const { return ops::layer_norm(x, gamma, beta); }

Mlp::Mlp(ParameterStore& store, const std::string& name, const std::vector<int>& dims, Rng& rng) {
  if (dims.size() < 2) throw ConfigError("Mlp needs at least input and output dims");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i)
    layers.emplace_back(store, name + "." + std::to_string(i), dims[i], dims[i + 1], rng);
}

Var Mlp::operator()(const Var& x) const {
  Var h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i](h);
    if (i + 1 < layers.size()) h = ops::relu(h);
  }
  return h;
}

}  // namespace mstr
