#include "isqa/feedback.hpp"

#include <algorithm>
#include <numeric>

#include "isqa/errors.hpp"

namespace isqa::feedback {

using ad::Graph;
using ad::Var;

void validate(const FeedbackConfig& cfg) {
  if (cfg.top_answers < 1) throw ConfigError("feedback top_answers must be >= 1");
  if (cfg.max_boxes < 1) throw ConfigError("feedback max_boxes must be >= 1");
}

std::vector<Real> channel_weights(Graph& g, Var scores, Var features, int top_answers) {
  if (!scores.valid() || !features.valid()) throw ContractError("attribution needs a recorded forward pass");
  const Tensor& s = g.value(scores);
  const Tensor& f = g.value(features);
  if (f.rank() != 2) throw DimensionError("vision features must be {K, J}, got " + f.shape_string());
  if (top_answers < 1) throw ContractError("top_answers must be >= 1");
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t l = std::min(static_cast<std::size_t>(top_answers), order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(l), order.end(),
                    [&](std::size_t a, std::size_t b) { return s[a] != s[b] ? s[a] > s[b] : a < b; });
  order.resize(l);
  Var target = g.sum(g.gather(scores, order));
  const ad::Gradients grads = g.backward(target);
  const Tensor d = grads.of(features);
  std::vector<Real> beta(static_cast<std::size_t>(f.dim(0)), 0);
  for (int k = 0; k < f.dim(0); ++k)
    for (int j = 0; j < f.dim(1); ++j) beta[static_cast<std::size_t>(k)] += d.at(k, j);
  return beta;
}

std::vector<Real> proposal_weights(std::span<const Real> beta, const Tensor& features) {
  if (features.rank() != 2 || static_cast<std::size_t>(features.dim(0)) != beta.size()) {
    throw DimensionError("beta has " + std::to_string(beta.size()) + " channels, features are " +
                         features.shape_string());
  }
  std::vector<Real> w(static_cast<std::size_t>(features.dim(1)), 0);
  for (int j = 0; j < features.dim(1); ++j) {
    Real acc = 0;
    for (int k = 0; k < features.dim(0); ++k) acc += beta[static_cast<std::size_t>(k)] * features.at(k, j);
    w[static_cast<std::size_t>(j)] = std::max<Real>(acc, 0);
  }
  return w;
}

Tensor feedback_masks(std::span<const Real> weights, std::span<const receiver::Proposal> proposals, int height,
                      int width) {
  if (weights.size() != proposals.size()) {
    throw DimensionError(std::to_string(weights.size()) + " weights for " + std::to_string(proposals.size()) +
                         " proposals");
  }
  Tensor heat({height, width});
  const std::size_t n = heat.size();
  for (std::size_t j = 0; j < proposals.size(); ++j) {
    const auto& pr = proposals[j];
    if (pr.area <= 0) throw ContractError("proposal " + std::to_string(j) + " has zero area");
    if (pr.mask.size() != n) throw DimensionError("proposal mask does not match canvas");
    const Real v = weights[j] / pr.area;
    for (std::size_t i = 0; i < n; ++i)
      if (pr.mask[i]) heat[i] += v;
  }
  return heat;
}

FeedbackSketch encode_feedback(const Tensor& heat, std::span<const receiver::Proposal> proposals, int max_boxes) {
  if (max_boxes < 1) throw ContractError("max_boxes must be >= 1");
  if (heat.rank() != 2) throw DimensionError("heat map must be {H, W}");
  FeedbackSketch out{heat.dim(0), heat.dim(1), {}};
  std::vector<Real> mean(proposals.size(), 0);
  for (std::size_t j = 0; j < proposals.size(); ++j) {
    const auto& pr = proposals[j];
    if (pr.mask.size() != heat.size()) throw DimensionError("proposal mask does not match canvas");
    Real acc = 0;
    for (std::size_t i = 0; i < heat.size(); ++i)
      if (pr.mask[i]) acc += heat[i];
    mean[j] = pr.area > 0 ? acc / pr.area : 0;
  }
  std::vector<std::size_t> order;
  for (std::size_t j = 0; j < mean.size(); ++j)
    if (mean[j] > 0) order.push_back(j);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return mean[a] > mean[b]; });
  if (order.size() > static_cast<std::size_t>(max_boxes)) order.resize(static_cast<std::size_t>(max_boxes));
  for (std::size_t j : order) {
    Box b = proposals[j].box;
    b.weight = mean[j];
    out.boxes.push_back(b);
  }
  return out;
}

Real weight_at(const FeedbackSketch& feedback, int row, int col) {
  if (row < 0 || col < 0 || row >= feedback.height || col >= feedback.width) {
    throw ContractError("pixel (" + std::to_string(row) + "," + std::to_string(col) + ") outside " +
                        std::to_string(feedback.height) + "x" + std::to_string(feedback.width) + " canvas");
  }
  Real w = 0;
  for (const auto& b : feedback.boxes)
    if (b.covers(row, col)) w += b.weight;
  return w;
}

std::vector<Real> weight_map(const FeedbackSketch& feedback) {
  std::vector<Real> map(static_cast<std::size_t>(feedback.height) * feedback.width, 0);
  for (const auto& b : feedback.boxes) {
    const int y1 = std::max(b.y1, 0), y2 = std::min(b.y2, feedback.height);
    const int x1 = std::max(b.x1, 0), x2 = std::min(b.x2, feedback.width);
    for (int y = y1; y < y2; ++y)
      for (int x = x1; x < x2; ++x) map[static_cast<std::size_t>(y) * feedback.width + x] += b.weight;
  }
  return map;
}

Attribution attribute(Graph& g, const receiver::Forward& forward, const FeedbackConfig& cfg, int height, int width) {
  validate(cfg);
  Attribution a;
  a.beta = channel_weights(g, forward.scores, forward.vision.features, cfg.top_answers);
  a.proposal_weights = proposal_weights(a.beta, g.value(forward.vision.features));
  a.heat = feedback_masks(a.proposal_weights, forward.vision.proposals, height, width);
  a.sketch = encode_feedback(a.heat, forward.vision.proposals, cfg.max_boxes);
  return a;
}

}  // namespace isqa::feedback
