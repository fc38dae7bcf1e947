#pragma once

#include <span>
#include <vector>

#include "isqa/autodiff.hpp"
#include "isqa/messages.hpp"
#include "isqa/receiver.hpp"

namespace isqa::feedback {

struct FeedbackConfig {
  int top_answers = 1;  // answers summed into the attribution target
  int max_boxes = 5;
};

void validate(const FeedbackConfig& cfg);

// Per-channel sensitivity of the sum of the `top_answers` largest scores,
// summed over proposals. `features` must be {K, J} and recorded in `g`.
std::vector<Real> channel_weights(ad::Graph& g, ad::Var scores, ad::Var features, int top_answers);

// ReLU of the beta-weighted channel sum, one entry per proposal.
std::vector<Real> proposal_weights(std::span<const Real> beta, const Tensor& features);

// Dense {H, W} map: each proposal spreads its weight evenly over its mask.
Tensor feedback_masks(std::span<const Real> weights, std::span<const receiver::Proposal> proposals, int height,
                      int width);

// Keeps at most `max_boxes` proposals with positive mean heat, largest first
// (ties to the lower proposal index).
FeedbackSketch encode_feedback(const Tensor& heat, std::span<const receiver::Proposal> proposals, int max_boxes);

// Sum of weights of boxes covering the pixel.
Real weight_at(const FeedbackSketch& feedback, int row, int col);
std::vector<Real> weight_map(const FeedbackSketch& feedback);

// Cost of a feedback sketch in transmitted numbers.
inline std::size_t feedback_cost(const FeedbackSketch& f) { return 5 * f.count(); }

struct Attribution {
  std::vector<Real> beta;
  std::vector<Real> proposal_weights;
  Tensor heat;
  FeedbackSketch sketch;
};

// Runs the full chain on a receiver forward pass recorded with attribution enabled.
Attribution attribute(ad::Graph& g, const receiver::Forward& forward, const FeedbackConfig& cfg, int height,
                      int width);

}  // namespace isqa::feedback
