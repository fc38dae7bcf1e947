#include "isqa/sender.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "isqa/errors.hpp"
#include "isqa/feedback.hpp"
#include "isqa/shapeworld.hpp"

namespace isqa::sender {

using ad::Graph;
using ad::Var;

namespace {

Tensor sobel_features(const Tensor& gray, int pool) {
  const int h = gray.dim(0), w = gray.dim(1);
  auto px = [&](int y, int x) { return gray.at(std::clamp(y, 0, h - 1), std::clamp(x, 0, w - 1)); };
  const int oh = h / pool, ow = w / pool;
  Tensor out({3, oh, ow});
  const Real norm = Real(0.25) / (pool * pool);
  for (int y = 0; y < oh * pool; ++y)
    for (int x = 0; x < ow * pool; ++x) {
      const Real gx = (px(y - 1, x + 1) + 2 * px(y, x + 1) + px(y + 1, x + 1)) -
                      (px(y - 1, x - 1) + 2 * px(y, x - 1) + px(y + 1, x - 1));
      const Real gy = (px(y + 1, x - 1) + 2 * px(y + 1, x) + px(y + 1, x + 1)) -
                      (px(y - 1, x - 1) + 2 * px(y - 1, x) + px(y - 1, x + 1));
      out.at(0, y / pool, x / pool) += std::abs(gx) * norm;
      out.at(1, y / pool, x / pool) += std::abs(gy) * norm;
      out.at(2, y / pool, x / pool) += std::sqrt(gx * gx + gy * gy) * norm;
    }
  return out;
}

Var conv_relu(Graph& g, const BoundParams& p, Var x, const std::string& name, int stride, int pad) {
  return g.relu(g.conv2d(x, p[name + ".w"], p[name + ".b"], stride, pad));
}

Var residual_block(Graph& g, const BoundParams& p, Var x, const std::string& name) {
  Var h = conv_relu(g, p, x, name + "1", 1, 1);
  return g.relu(g.add(x, g.conv2d(h, p[name + "2.w"], p[name + "2.b"], 1, 1)));
}

}  // namespace

ParamSet init_sender_params(const SenderConfig& cfg, std::uint64_t seed) {
  if (cfg.height % (2 * kFeatureStride) != 0 || cfg.width % (2 * kFeatureStride) != 0) {
    throw ConfigError("sender canvas must be divisible by " + std::to_string(2 * kFeatureStride));
  }
  Rng rng(seed);
  const int f = cfg.feature_channels, d = cfg.decoder_channels, c = cfg.complexity_hidden;
  const int levels = static_cast<int>(cfg.budget_levels.size());
  const int mid = (cfg.height / 2) * (cfg.width / 2);
  ParamSet p;
  auto conv = [&](const std::string& name, int out, int in, int k, Real gain = 1.0) {
    p.add(name + ".w", init_weight(rng, {out, in, k, k}, in * k * k, gain));
    p.add(name + ".b", Tensor::zeros({out}));
  };
  auto deconv = [&](const std::string& name, int in, int out, int k, Real gain = 1.0) {
    p.add(name + ".w", init_weight(rng, {in, out, k, k}, in, gain));
    p.add(name + ".b", Tensor::zeros({out}));
  };
  conv("prag.c1", f, 3, kFeatureStride);
  conv("prag.r1", f, f, 3);
  conv("prag.r2", f, f, 3, 0.5);
  deconv("fuse", f, f, 2);
  p.add("cplx.w1", init_weight(rng, {levels, c}, levels));
  p.add("cplx.b1", Tensor::zeros({1, c}));
  p.add("cplx.w2", init_weight(rng, {c, mid}, c, 0.5));
  p.add("cplx.b2", Tensor::zeros({1, mid}));
  conv("dec.e1", d, f + 1, 3);
  conv("dec.r1", d, d, 3);
  conv("dec.r2", d, d, 3, 0.5);
  deconv("dec.u1", d, f, 2);
  conv("dec.skip", f, f + 1, 1);
  deconv("dec.fin", f, f, 2);
  conv("dec.out", 1, f, 3, 0.5);
  p["dec.out.b"].fill(1.0);  // start from a mostly blank draft
  return p;
}

Tensor encode_geometric(const Tensor& image) {
  const Tensor gray = shapeworld::grayscale(image);
  const int h = gray.dim(0), w = gray.dim(1);
  if (h % kFeatureStride != 0 || w % kFeatureStride != 0) {
    throw DimensionError("image dims must be divisible by " + std::to_string(kFeatureStride));
  }
  Tensor half({h / 2, w / 2});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) half.at(y / 2, x / 2) += gray.at(y, x) * 0.25;
  const Tensor fine = sobel_features(gray, kFeatureStride);
  const Tensor coarse = sobel_features(half, kFeatureStride / 2);
  Tensor out({6, h / kFeatureStride, w / kFeatureStride});
  std::copy(fine.data().begin(), fine.data().end(), out.data().begin());
  std::copy(coarse.data().begin(), coarse.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(fine.size()));
  return out;
}

Var encode_pragmatic(Graph& g, const BoundParams& p, Var image) {
  Var x = conv_relu(g, p, image, "prag.c1", kFeatureStride, 0);
  return residual_block(g, p, x, "prag.r");
}

Tensor encode_pragmatic(const Tensor& image, const ParamSet& params) {
  Graph g;
  BoundParams p(g, params, false);
  return g.value(encode_pragmatic(g, p, g.constant(image)));
}

Var blend(Graph& g, Var geo, Var prag, Real a) {
  if (!(a >= 0 && a <= 1)) throw ContractError("interpretability level a must lie in [0,1], got " + std::to_string(a));
  if (g.shape(geo) != g.shape(prag)) {
    throw DimensionError("fusion inputs differ: " + shape_to_string(g.shape(geo)) + " vs " +
                         shape_to_string(g.shape(prag)));
  }
  // Endpoints drop the other branch entirely so they are exact.
  if (a == 1) return geo;
  if (a == 0) return prag;
  return g.add(g.scale(geo, a), g.scale(prag, 1 - a));
}

Var fuse(Graph& g, const BoundParams& p, Var geo, Var prag, Real a) {
  return g.relu(g.deconv2d(blend(g, geo, prag, a), p["fuse.w"], p["fuse.b"], 2));
}

std::size_t quantize_budget(Real fraction, std::span<const Real> levels) {
  if (levels.empty()) throw ConfigError("empty budget level grid");
  std::size_t best = 0;
  for (std::size_t i = 1; i < levels.size(); ++i) {
    const Real d = std::abs(levels[i] - fraction), bd = std::abs(levels[best] - fraction);
    if (d < bd || (d == bd && levels[i] < levels[best])) best = i;
  }
  return best;
}

Var generate_sketch(Graph& g, const BoundParams& p, Var fusion, Real cumulative, const SenderConfig& cfg) {
  if (!(cumulative > 0 && cumulative <= 1 + 1e-12)) {
    throw ContractError("cumulative budget fraction must lie in (0,1], got " + std::to_string(cumulative));
  }
  const auto& fs = g.shape(fusion);
  const int levels = static_cast<int>(cfg.budget_levels.size());
  Tensor onehot({1, levels});
  onehot[quantize_budget(cumulative, cfg.budget_levels)] = 1;
  Var hidden = g.tanh(g.add(g.matmul(g.constant(onehot), p["cplx.w1"]), p["cplx.b1"]));
  Var matrix = g.add(g.matmul(hidden, p["cplx.w2"]), p["cplx.b2"]);
  Var plane = g.reshape(matrix, {1, fs[1], fs[2]});
  Var parts[2] = {fusion, plane};
  Var cat = g.concat(parts);

  Var e1 = conv_relu(g, p, cat, "dec.e1", 2, 1);
  Var e2 = residual_block(g, p, e1, "dec.r");
  Var up = g.deconv2d(e2, p["dec.u1.w"], p["dec.u1.b"], 2);
  Var skip = g.conv2d(cat, p["dec.skip.w"], p["dec.skip.b"], 1, 0);
  Var u = g.relu(g.add(up, skip));
  Var full = g.relu(g.deconv2d(u, p["dec.fin.w"], p["dec.fin.b"], 2));
  Var out = g.conv2d(full, p["dec.out.w"], p["dec.out.b"], 1, 1);
  return g.reshape(g.sigmoid(out), {cfg.height, cfg.width});
}

SketchState::SketchState(int height, int width)
    : sent_mask(static_cast<std::size_t>(height) * width, 0), accumulated(Sketch::blank(height, width)) {}

std::size_t SketchState::sent_count() const {
  return static_cast<std::size_t>(std::count(sent_mask.begin(), sent_mask.end(), 1));
}

std::size_t budget_pixels(Real fraction, std::size_t n_pixels) {
  if (fraction <= 0) return 0;
  return static_cast<std::size_t>(std::floor(fraction * static_cast<Real>(n_pixels) + 1e-9));
}

Selection select_pixels(std::span<const Real> draft, std::optional<std::span<const Real>> weights, Real fraction,
                        SketchState& state) {
  const std::size_t n = draft.size();
  if (state.sent_mask.size() != n) throw DimensionError("draft sketch does not match episode canvas");
  if (weights && weights->size() != n) throw DimensionError("feedback weights do not match canvas");
  if (!(fraction >= 0 && fraction <= 1 + 1e-12)) {
    throw ContractError("round budget must lie in [0,1], got " + std::to_string(fraction));
  }

  std::vector<Real> importance(n, 0);
  std::vector<std::size_t> candidates;
  candidates.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (state.sent_mask[i]) continue;
    Real v = 1 - draft[i];
    if (weights) v *= (*weights)[i];
    importance[i] = v;
    candidates.push_back(i);
  }
  const std::size_t k = std::min(budget_pixels(fraction, n), candidates.size());
  auto by_rank = [&](std::size_t a, std::size_t b) {
    return importance[a] != importance[b] ? importance[a] > importance[b] : a < b;
  };
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end(), by_rank);

  Selection sel;
  sel.sketch = Sketch::blank(state.accumulated.height, state.accumulated.width);
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t i = candidates[r];
    if (!(importance[i] > 0)) break;
    const Real v = std::min(draft[i], kMaxActiveIntensity);
    sel.sketch.pixels[i] = v;
    sel.indices.push_back(i);
    state.sent_mask[i] = 1;
    state.accumulated.pixels[i] = std::min(state.accumulated.pixels[i], v);
  }
  sel.pixels = sel.indices.size();
  state.pixel_counts.push_back(sel.pixels);
  return sel;
}

Selection select_pixels(const Sketch& draft, const FeedbackSketch* feedback, Real fraction, SketchState& state) {
  if (!feedback) return select_pixels(draft.pixels, std::nullopt, fraction, state);
  const std::vector<Real> weights = feedback::weight_map(*feedback);
  return select_pixels(draft.pixels, std::span<const Real>(weights), fraction, state);
}

SenderModel::SenderModel(SenderConfig cfg, ParamSet params, Real a) : cfg_(std::move(cfg)), params_(std::move(params)), a_(a) {
  if (!(a >= 0 && a <= 1)) throw ContractError("interpretability level a must lie in [0,1]");
}

Var SenderModel::forward(Graph& g, const BoundParams& p, const Tensor& image, const Tensor& geo, Real cumulative) const {
  Var img = g.constant(image);
  Var fgeo = g.constant(geo);
  Var fprag = a_ == 1 ? fgeo : encode_pragmatic(g, p, img);
  Var fusion = fuse(g, p, fgeo, fprag, a_);
  return generate_sketch(g, p, fusion, cumulative, cfg_);
}

Tensor SenderModel::fusion(const Tensor& image) const {
  Graph g;
  BoundParams p(g, params_, false);
  Var fgeo = g.constant(encode_geometric(image));
  Var fprag = a_ == 1 ? fgeo : encode_pragmatic(g, p, g.constant(image));
  return g.value(fuse(g, p, fgeo, fprag, a_));
}

Sketch SenderModel::draft(const Tensor& fusion, Real cumulative) const {
  Graph g;
  BoundParams p(g, params_, false);
  const Tensor& s = g.value(generate_sketch(g, p, g.constant(fusion), cumulative, cfg_));
  return Sketch{cfg_.height, cfg_.width, s.storage()};
}

}  // namespace isqa::sender
