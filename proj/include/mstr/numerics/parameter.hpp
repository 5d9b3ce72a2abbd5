#pragma once

#include <string>
#include <vector>

#include "mstr/numerics/autograd.hpp"
#include "mstr/numerics/random.hpp"

namespace mstr {

struct Parameter {
  std::string name;
  Var var;
  bool trainable = true;
};

// Owns every learnable tensor of a model; names are unique.
class ParameterStore {
 public:
  Var create(const std::string& name, Tensor init, bool trainable = true);

  const std::vector<Parameter>& parameters() const { return params_; }
  std::vector<Parameter>& parameters() { return params_; }

  const Parameter* find(const std::string& name) const;
  Parameter* find(const std::string& name);
  Var get(const std::string& name) const;

  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<Parameter> params_;
};

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), the default fan-in scaled init for linear layers.
Tensor kaiming_uniform(Shape shape, int fan_in, Rng& rng);

// y = x W^T + b
class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, int in, int out, Rng& rng,
         bool bias = true);

  Var operator()(const Var& x) const;

  Var weight;
  Var bias;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, int dim);

  Var operator()(const Var& x) const;

  Var gamma;
  Var beta;
};

// Linear layers with ReLU between them (none after the last).
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterStore& store, const std::string& name, const std::vector<int>& dims, Rng& rng);

  Var operator()(const Var& x) const;

  std::vector<Linear> layers;
};

}  // namespace mstr
