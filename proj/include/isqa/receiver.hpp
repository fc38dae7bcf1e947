#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "isqa/autodiff.hpp"
#include "isqa/messages.hpp"
#include "isqa/params.hpp"

namespace isqa::receiver {

struct ReceiverConfig {
  int height = 64;
  int width = 64;
  int grid = 8;  // proposal cell edge in pixels
  int embed_dim = 16;
  int max_tokens = 12;
  int stem_channels = 16;
  int vision_channels = 24;
  int attention_dim = 24;
  int hidden = 48;
};

// Pixels of the first vision conv (kernel = stride).
inline constexpr int kVisionStem = 4;

void validate(const ReceiverConfig& cfg);
ParamSet init_receiver_params(const ReceiverConfig& cfg, std::uint64_t seed);

struct Proposal {
  Box box;                     // weight unused
  std::vector<std::uint8_t> mask;  // row-major canvas, 1 inside
  int area = 0;
  std::vector<Real> feature;   // column of F_vision
};

std::vector<Proposal> grid_proposals(const ReceiverConfig& cfg);

// Token ids -> {T, D}. Empty questions are a contract error.
ad::Var encode_question(ad::Graph& g, const BoundParams& p, std::span<const int> tokens, const ReceiverConfig& cfg);
std::vector<int> tokenize(const std::vector<std::string>& words);

// Elementwise minimum: every transmitted pixel survives.
Sketch overlay_sketches(std::span<const Sketch> sketches);

struct VisionEncoding {
  std::vector<Proposal> proposals;
  ad::Var features;  // {K, J}
};

VisionEncoding encode_vision(ad::Graph& g, const BoundParams& p, const Sketch& accumulated, const ReceiverConfig& cfg);
// Differentiable variant over a sketch variable of shape {H, W}.
VisionEncoding encode_vision(ad::Graph& g, const BoundParams& p, ad::Var sketch, const ReceiverConfig& cfg);

// Per-answer sigmoid scores {A}.
ad::Var answer(ad::Graph& g, const BoundParams& p, ad::Var language, ad::Var vision, const ReceiverConfig& cfg);

// Argmax, ties to the lowest index.
int predict(std::span<const Real> scores);

struct Forward {
  ad::Var language;
  VisionEncoding vision;
  ad::Var scores;
};

class ReceiverModel {
public:
  ReceiverModel(ReceiverConfig cfg, ParamSet params);

  const ReceiverConfig& config() const noexcept { return cfg_; }
  const ParamSet& params() const noexcept { return params_; }
  ParamSet& params() noexcept { return params_; }

  // With `attribution`, the vision features enter the answer head as a
  // gradient-tracked leaf so attribution works even with frozen parameters.
  Forward forward(ad::Graph& g, const BoundParams& p, std::span<const int> tokens, const Sketch& sketch,
                  bool attribution = false) const;
  Forward forward(ad::Graph& g, const BoundParams& p, std::span<const int> tokens, ad::Var sketch) const;
  std::vector<Real> scores(std::span<const int> tokens, const Sketch& sketch) const;

private:
  ReceiverConfig cfg_;
  ParamSet params_;
};

}  // namespace isqa::receiver
