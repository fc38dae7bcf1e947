#include "isqa/params.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "isqa/errors.hpp"

namespace isqa {

namespace fs = std::filesystem;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

std::uint64_t Rng::next() { return engine_(); }

Real Rng::uniform() { return static_cast<Real>(next() >> 11) * 0x1.0p-53; }

Real Rng::uniform(Real lo, Real hi) { return lo + (hi - lo) * uniform(); }

int Rng::uniform_int(int lo, int hi) {
  if (hi < lo) throw ContractError("uniform_int with empty range");
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  std::uint64_t r;
  do {
    r = next();
  } while (r >= limit);
  return lo + static_cast<int>(r % span);
}

Real Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  Real u1;
  do {
    u1 = uniform();
  } while (u1 <= 0);
  const Real u2 = uniform();
  const Real r = std::sqrt(-2 * std::log(u1));
  const Real theta = 2 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

Tensor& ParamSet::add(const std::string& name, Tensor value) {
  if (contains(name)) throw ContractError("duplicate parameter " + name);
  index_[name] = entries_.size();
  entries_.emplace_back(name, std::move(value));
  return entries_.back().second;
}

Tensor& ParamSet::operator[](const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter " + name);
  return entries_[it->second].second;
}

const Tensor& ParamSet::operator[](const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter " + name);
  return entries_[it->second].second;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (const auto& [name, t] : entries_) out.add(name, Tensor::zeros(t.shape()));
  return out;
}

void ParamSet::scale(Real factor) {
  for (auto& e : entries_)
    for (Real& v : e.second.data()) v *= factor;
}

ParamSet& ParamSet::operator+=(const ParamSet& other) {
  for (const auto& [name, t] : other.entries_) (*this)[name] += t;
  return *this;
}

Real ParamSet::squared_norm() const {
  Real acc = 0;
  for (const auto& e : entries_)
    for (Real v : e.second.data()) acc += v * v;
  return acc;
}

bool ParamSet::all_finite() const {
  for (const auto& e : entries_)
    if (!e.second.all_finite()) return false;
  return true;
}

std::string ParamSet::digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& [name, t] : entries_) {
    h = fnv1a64(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(name.data()), name.size()), h);
    std::ostringstream os;
    write_tensor(os, t);
    const std::string bytes = os.str();
    h = fnv1a64(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()), h);
  }
  return digest_hex(h);
}

BoundParams::BoundParams(ad::Graph& graph, const ParamSet& params, bool trainable) {
  for (const auto& [name, t] : params.entries()) vars_[name] = trainable ? graph.input(t) : graph.constant(t);
}

ad::Var BoundParams::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw ContractError("parameter " + name + " not bound");
  return it->second;
}

void BoundParams::accumulate(const ad::Gradients& grads, ParamSet& into) const {
  for (const auto& [name, var] : vars_) {
    if (const Tensor* g = grads.find(var)) into[name] += *g;
  }
}

Tensor init_weight(Rng& rng, std::vector<int> shape, int fan_in, Real gain) {
  Tensor t(std::move(shape));
  const Real sd = gain * std::sqrt(2.0 / std::max(1, fan_in));
  for (Real& v : t.data()) v = sd * rng.normal();
  return t;
}

Adam::Adam(Real lr, Real beta1, Real beta2, Real eps) : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(ParamSet& params, const ParamSet& grads) {
  if (m_.size() == 0) {
    m_ = params.zeros_like();
    v_ = params.zeros_like();
  }
  ++t_;
  const Real c1 = 1 - std::pow(beta1_, static_cast<Real>(t_));
  const Real c2 = 1 - std::pow(beta2_, static_cast<Real>(t_));
  for (auto& [name, p] : params.entries()) {
    const Tensor& g = grads[name];
    Tensor& m = m_[name];
    Tensor& v = v_[name];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1_ * m[i] + (1 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1 - beta2_) * g[i] * g[i];
      p[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

void Sgd::step(ParamSet& params, const ParamSet& grads) {
  for (auto& [name, p] : params.entries()) {
    const Tensor& g = grads[name];
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr_ * g[i];
  }
}

Real clip_global_norm(ParamSet& grads, Real max_norm) {
  const Real norm = std::sqrt(grads.squared_norm());
  if (norm > max_norm && norm > 0) grads.scale(max_norm / norm);
  return norm;
}

void save_params(const std::string& dir, const std::string& prefix, const ParamSet& params) {
  fs::create_directories(dir);
  std::ofstream index(fs::path(dir) / (prefix + "_tensors.txt"));
  if (!index) throw IoError("cannot write checkpoint index in " + dir);
  for (const auto& [name, t] : params.entries()) {
    const std::string file = prefix + "." + name + ".bin";
    save_tensor((fs::path(dir) / file).string(), t);
    index << name << ' ' << file << ' ' << t.shape_string() << '\n';
  }
}

ParamSet load_params(const std::string& dir, const std::string& prefix) {
  const fs::path idx = fs::path(dir) / (prefix + "_tensors.txt");
  std::ifstream index(idx);
  if (!index) throw IoError("missing checkpoint " + idx.string());
  ParamSet out;
  std::string line;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name, file;
    ls >> name >> file;
    out.add(name, load_tensor((fs::path(dir) / file).string()));
  }
  return out;
}

}  // namespace isqa
