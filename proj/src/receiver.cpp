#include "isqa/receiver.hpp"

#include <algorithm>
#include <cmath>

#include "isqa/errors.hpp"
#include "isqa/shapeworld.hpp"

namespace isqa::receiver {

using ad::Graph;
using ad::Var;

void validate(const ReceiverConfig& cfg) {
  if (cfg.grid <= 0 || cfg.grid % kVisionStem != 0) {
    throw ConfigError("proposal grid " + std::to_string(cfg.grid) + " must be a positive multiple of " +
                      std::to_string(kVisionStem));
  }
  if (cfg.height <= 0 || cfg.width <= 0 || cfg.height % cfg.grid != 0 || cfg.width % cfg.grid != 0) {
    throw ConfigError("canvas " + std::to_string(cfg.height) + "x" + std::to_string(cfg.width) +
                      " is not divisible by proposal grid " + std::to_string(cfg.grid));
  }
  if (cfg.max_tokens <= 0 || cfg.embed_dim <= 0) throw ConfigError("receiver dims must be positive");
}

ParamSet init_receiver_params(const ReceiverConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Rng rng(seed);
  const int vocab = static_cast<int>(shapeworld::question_vocabulary().size());
  const int answers = static_cast<int>(shapeworld::answer_vocabulary().size());
  const int d = cfg.embed_dim, a = cfg.attention_dim, k = cfg.vision_channels, h = cfg.hidden;
  const int cell = cfg.grid / kVisionStem;
  ParamSet p;
  p.add("q.embed", init_weight(rng, {vocab, d}, 2));
  p.add("q.pos", init_weight(rng, {cfg.max_tokens, d}, 2, 0.5));
  p.add("q.w", init_weight(rng, {d, d}, d));
  p.add("q.b", Tensor::zeros({1, d}));
  p.add("v.c0.w", init_weight(rng, {cfg.stem_channels / 2, 3, 3, 3}, 27));
  p.add("v.c1.w", init_weight(rng, {cfg.stem_channels, cfg.stem_channels / 2, 3, 3}, cfg.stem_channels / 2 * 9));
  p.add("v.m1.w", init_weight(rng, {cfg.stem_channels, cfg.stem_channels, 3, 3}, cfg.stem_channels * 9));
  p.add("v.m2.w", init_weight(rng, {cfg.stem_channels, cfg.stem_channels, 3, 3}, cfg.stem_channels * 9, 0.5));
  p.add("v.c2.w", init_weight(rng, {k, cfg.stem_channels, cell, cell}, cfg.stem_channels * cell * cell));
  p.add("v.c2.b", Tensor({k}, 0.05));
  p.add("v.c3.w", init_weight(rng, {k, k, 1, 1}, k));
  p.add("v.c3.b", Tensor({k}, -2.0));
  p.add("a.mix", Tensor({cfg.max_tokens, d}, 1.0 / 4));
  p.add("a.wq", init_weight(rng, {d, a}, d));
  p.add("a.wk", init_weight(rng, {k, a}, k));
  p.add("a.gate", Tensor({1, 1}, -3.0));
  p.add("a.wv", init_weight(rng, {k, h}, k));
  p.add("a.wu", init_weight(rng, {d, h}, d));
  p.add("a.bz", Tensor::zeros({1, h}));
  p.add("head.w1", init_weight(rng, {h, h}, h));
  p.add("head.wu", init_weight(rng, {d, h}, d));
  p.add("head.b1", Tensor::zeros({1, h}));
  p.add("head.w2", init_weight(rng, {h, answers}, h, 0.5));
  p.add("head.b2", Tensor({1, answers}, -std::log(static_cast<Real>(answers - 1))));
  return p;
}

std::vector<Proposal> grid_proposals(const ReceiverConfig& cfg) {
  validate(cfg);
  std::vector<Proposal> out;
  for (int gy = 0; gy < cfg.height / cfg.grid; ++gy)
    for (int gx = 0; gx < cfg.width / cfg.grid; ++gx) {
      Proposal pr;
      pr.box = Box{gx * cfg.grid, gy * cfg.grid, (gx + 1) * cfg.grid, (gy + 1) * cfg.grid, 0};
      pr.mask.assign(static_cast<std::size_t>(cfg.height) * cfg.width, 0);
      for (int y = pr.box.y1; y < pr.box.y2; ++y)
        for (int x = pr.box.x1; x < pr.box.x2; ++x) pr.mask[static_cast<std::size_t>(y) * cfg.width + x] = 1;
      pr.area = pr.box.area();
      out.push_back(std::move(pr));
    }
  return out;
}

std::vector<int> tokenize(const std::vector<std::string>& words) {
  std::vector<int> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(shapeworld::token_id(w));
  return ids;
}

Var encode_question(Graph& g, const BoundParams& p, std::span<const int> tokens, const ReceiverConfig& cfg) {
  if (tokens.empty()) throw ContractError("cannot encode an empty question");
  if (static_cast<int>(tokens.size()) > cfg.max_tokens) {
    throw ContractError("question has " + std::to_string(tokens.size()) + " tokens, limit is " +
                        std::to_string(cfg.max_tokens));
  }
  std::vector<int> rows(tokens.begin(), tokens.end());
  std::vector<int> positions(tokens.size());
  for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = static_cast<int>(i);
  Var x = g.add(g.gather_rows(p["q.embed"], rows), g.gather_rows(p["q.pos"], positions));
  return g.tanh(g.add(g.matmul(x, p["q.w"]), p["q.b"]));
}

Sketch overlay_sketches(std::span<const Sketch> sketches) {
  if (sketches.empty()) throw ContractError("overlay of zero sketches");
  Sketch out = sketches.front();
  for (const auto& s : sketches.subspan(1)) {
    if (s.height != out.height || s.width != out.width) {
      throw DimensionError("overlay canvas mismatch: " + std::to_string(s.height) + "x" + std::to_string(s.width) +
                           " vs " + std::to_string(out.height) + "x" + std::to_string(out.width));
    }
    for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] = std::min(out.pixels[i], s.pixels[i]);
  }
  return out;
}

VisionEncoding encode_vision(Graph& g, const BoundParams& p, const Sketch& accumulated, const ReceiverConfig& cfg) {
  if (accumulated.height != cfg.height || accumulated.width != cfg.width) {
    throw DimensionError("sketch is " + std::to_string(accumulated.height) + "x" + std::to_string(accumulated.width) +
                         ", receiver expects " + std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
  }
  return encode_vision(g, p, g.constant(Tensor({cfg.height, cfg.width}, accumulated.pixels)), cfg);
}

VisionEncoding encode_vision(Graph& g, const BoundParams& p, Var sketch, const ReceiverConfig& cfg) {
  validate(cfg);
  const int h = cfg.height, w = cfg.width;
  if (g.shape(sketch) != std::vector<int>{h, w}) {
    throw DimensionError("sketch is " + shape_to_string(g.shape(sketch)) + ", receiver expects " +
                         std::to_string(h) + "x" + std::to_string(w));
  }
  // darkness plus darkness-weighted coordinates, so position survives pooling
  Tensor xs({1, h, w}), ys({1, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      xs.at(0, y, x) = (2.0 * x + 1) / w - 1;
      ys.at(0, y, x) = (2.0 * y + 1) / h - 1;
    }
  Var dark = g.reshape(g.add_scalar(g.scale(sketch, -1), 1), {1, h, w});
  Var channels[3] = {dark, g.mul(dark, g.constant(std::move(xs))), g.mul(dark, g.constant(std::move(ys)))};
  Var input = g.concat(channels);
  const int cell = cfg.grid / kVisionStem;
  // padded layers carry no bias, so an empty canvas stays zero up to the cell pooling
  Var half = g.relu(g.conv2d(input, p["v.c0.w"], 2, 1));
  Var stem = g.relu(g.conv2d(half, p["v.c1.w"], 2, 1));
  Var mid = g.relu(g.conv2d(stem, p["v.m1.w"], 1, 1));
  stem = g.relu(g.add(stem, g.conv2d(mid, p["v.m2.w"], 1, 1)));
  Var cells = g.relu(g.conv2d(stem, p["v.c2.w"], p["v.c2.b"], cell, 0));
  Var pooled = g.sigmoid(g.conv2d(cells, p["v.c3.w"], p["v.c3.b"], 1, 0));
  const auto& s = g.shape(pooled);
  VisionEncoding enc;
  enc.features = g.reshape(pooled, {s[0], s[1] * s[2]});
  enc.proposals = grid_proposals(cfg);
  const Tensor& f = g.value(enc.features);
  for (int j = 0; j < f.dim(1); ++j) {
    auto& feat = enc.proposals[static_cast<std::size_t>(j)].feature;
    for (int k = 0; k < f.dim(0); ++k) feat.push_back(f.at(k, j));
  }
  return enc;
}

Var answer(Graph& g, const BoundParams& p, Var language, Var vision, const ReceiverConfig& cfg) {
  const int tokens = g.shape(language)[0];
  const int proposals = g.shape(vision)[1];
  std::vector<int> positions(static_cast<std::size_t>(tokens));
  for (int i = 0; i < tokens; ++i) positions[static_cast<std::size_t>(i)] = i;
  // position-weighted question summary {1, D}
  Var summary = g.sum_rows(g.mul(language, g.gather_rows(p["a.mix"], positions)));
  Var per_proposal = g.transpose(vision);  // {J, K}
  Var keys = g.matmul(per_proposal, p["a.wk"]);
  Var query = g.matmul(summary, p["a.wq"]);
  Var logits = g.scale(g.matmul(keys, g.transpose(query)), 1 / std::sqrt(static_cast<Real>(cfg.attention_dim)));
  Var gates = g.sigmoid(g.add(logits, p["a.gate"]));  // {J, 1}
  // question-conditioned response of every proposal, gated and summed
  Var response = g.mul(g.tanh(g.add(g.matmul(per_proposal, p["a.wv"]), p["a.bz"])), g.tanh(g.matmul(summary, p["a.wu"])));
  Var context = g.scale(g.matmul(g.transpose(gates), response), 1 / std::sqrt(static_cast<Real>(proposals)));
  Var hidden = g.tanh(g.add(g.add(g.matmul(context, p["head.w1"]), g.matmul(summary, p["head.wu"])), p["head.b1"]));
  Var out = g.sigmoid(g.add(g.matmul(hidden, p["head.w2"]), p["head.b2"]));
  return g.reshape(out, {g.shape(out)[1]});
}

int predict(std::span<const Real> scores) {
  if (scores.empty()) throw ContractError("empty answer distribution");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i] > scores[best]) best = i;
  return static_cast<int>(best);
}

ReceiverModel::ReceiverModel(ReceiverConfig cfg, ParamSet params) : cfg_(std::move(cfg)), params_(std::move(params)) {
  validate(cfg_);
}

Forward ReceiverModel::forward(Graph& g, const BoundParams& p, std::span<const int> tokens, const Sketch& sketch,
                               bool attribution) const {
  Forward f;
  f.language = encode_question(g, p, tokens, cfg_);
  f.vision = encode_vision(g, p, sketch, cfg_);
  if (attribution) f.vision.features = g.input(g.value(f.vision.features));
  f.scores = answer(g, p, f.language, f.vision.features, cfg_);
  return f;
}

Forward ReceiverModel::forward(Graph& g, const BoundParams& p, std::span<const int> tokens, Var sketch) const {
  Forward f;
  f.language = encode_question(g, p, tokens, cfg_);
  f.vision = encode_vision(g, p, sketch, cfg_);
  f.scores = answer(g, p, f.language, f.vision.features, cfg_);
  return f;
}

std::vector<Real> ReceiverModel::scores(std::span<const int> tokens, const Sketch& sketch) const {
  Graph g;
  BoundParams p(g, params_, false);
  return g.value(forward(g, p, tokens, sketch).scores).storage();
}

}  // namespace isqa::receiver
