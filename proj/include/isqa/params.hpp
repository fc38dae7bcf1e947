#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "isqa/autodiff.hpp"
#include "isqa/tensor.hpp"

namespace isqa {

// Deterministic random stream. Uses mt19937_64 bits with hand-rolled
// transforms so that draws do not depend on the standard library's
// distribution implementations.
class Rng {
public:
  explicit Rng(std::uint64_t seed);
  std::uint64_t next();
  Real uniform();                       // [0, 1)
  Real uniform(Real lo, Real hi);
  int uniform_int(int lo, int hi);      // inclusive
  Real normal();
  bool bernoulli(Real p) { return uniform() < p; }

private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  Real spare_ = 0;
};

// Mixes a base seed with a stream index (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Ordered named tensors. Iteration order is insertion order, which fixes the
// layout of checkpoints and optimizer state.
class ParamSet {
public:
  Tensor& add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor& operator[](const std::string& name);
  const Tensor& operator[](const std::string& name) const;

  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<std::pair<std::string, Tensor>>& entries() const noexcept { return entries_; }
  std::vector<std::pair<std::string, Tensor>>& entries() noexcept { return entries_; }

  ParamSet zeros_like() const;
  void scale(Real factor);
  ParamSet& operator+=(const ParamSet& other);
  Real squared_norm() const;
  bool all_finite() const;
  std::string digest() const;  // over the float32 serialization

private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

// Parameters registered as graph leaves for one forward pass.
class BoundParams {
public:
  BoundParams(ad::Graph& graph, const ParamSet& params, bool trainable);
  ad::Var operator[](const std::string& name) const;
  // Collect d(root)/d(param) for every bound parameter into `into`.
  void accumulate(const ad::Gradients& grads, ParamSet& into) const;

private:
  std::map<std::string, ad::Var> vars_;
};

// He-style initialisation for a conv/linear weight with the given fan-in.
Tensor init_weight(Rng& rng, std::vector<int> shape, int fan_in, Real gain = 1.0);

class Adam {
public:
  explicit Adam(Real lr, Real beta1 = 0.9, Real beta2 = 0.999, Real eps = 1e-8);
  void step(ParamSet& params, const ParamSet& grads);
  Real learning_rate() const noexcept { return lr_; }

private:
  Real lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  ParamSet m_, v_;
};

class Sgd {
public:
  explicit Sgd(Real lr) : lr_(lr) {}
  void step(ParamSet& params, const ParamSet& grads);

private:
  Real lr_;
};

// Rescales grads so that their global L2 norm is at most max_norm; returns the
// pre-clip norm.
Real clip_global_norm(ParamSet& grads, Real max_norm);

// Checkpoint directory: one flat binary tensor per parameter plus a
// `tensors.txt` index (name, file, shape) in insertion order.
void save_params(const std::string& dir, const std::string& prefix, const ParamSet& params);
ParamSet load_params(const std::string& dir, const std::string& prefix);

}  // namespace isqa
