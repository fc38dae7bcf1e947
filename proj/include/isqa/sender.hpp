#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "isqa/autodiff.hpp"
#include "isqa/messages.hpp"
#include "isqa/params.hpp"

namespace isqa::sender {

struct SenderConfig {
  int height = 64;
  int width = 64;
  int feature_channels = 6;  // channels of F_geo, F_prag
  int decoder_channels = 8;
  int complexity_hidden = 16;
  std::vector<Real> budget_levels = {0.01, 0.03, 0.05, 0.1, 0.2, 0.3, 0.5, 1.0};
};

// Feature maps live at 1/4 canvas resolution; fusion upsamples to 1/2 and the
// decoder to full resolution.
inline constexpr int kFeatureStride = 4;

ParamSet init_sender_params(const SenderConfig& cfg, std::uint64_t seed);

// Fixed multi-scale edge features {6, H/4, W/4}: |gx|, |gy|, magnitude of a
// Sobel operator at full and half resolution, average-pooled to the feature grid.
Tensor encode_geometric(const Tensor& image);

ad::Var encode_pragmatic(ad::Graph& g, const BoundParams& p, ad::Var image);
Tensor encode_pragmatic(const Tensor& image, const ParamSet& params);

// Deconv(a * geo + (1 - a) * prag); `a` must lie in [0, 1].
ad::Var fuse(ad::Graph& g, const BoundParams& p, ad::Var geo, ad::Var prag, Real a);
ad::Var blend(ad::Graph& g, ad::Var geo, ad::Var prag, Real a);

// Nearest level; ties resolve to the lower level.
std::size_t quantize_budget(Real fraction, std::span<const Real> levels);

// Decodes the complexity-conditioned sketch before selection, shape {H, W}, in [0,1].
ad::Var generate_sketch(ad::Graph& g, const BoundParams& p, ad::Var fusion, Real cumulative_fraction,
                        const SenderConfig& cfg);

// Bookkeeping of everything already transmitted in an episode.
struct SketchState {
  SketchState(int height, int width);
  std::vector<std::uint8_t> sent_mask;
  Sketch accumulated;
  std::vector<std::size_t> pixel_counts;  // p_i per round
  std::size_t sent_count() const;
};

struct Selection {
  Sketch sketch;                     // S_i: selected pixels keep their value, others are 1
  std::size_t pixels = 0;            // p_i
  std::vector<std::size_t> indices;  // row-major indices of transmitted pixels, in rank order
};

// floor(b * N) with a small tolerance so that exact products are not lost to rounding.
std::size_t budget_pixels(Real fraction, std::size_t n_pixels);

// Largest value a transmitted pixel may carry, chosen so that it still reads
// as activated after a float32 wire round trip.
inline constexpr Real kMaxActiveIntensity = 0.99999994039535522;  // nextafter(1.0f, 0.0f)

// Ranks remaining pixels by darkness (1 - value), multiplied by the per-pixel
// feedback weight when `weights` is given, and keeps the top floor(b*N).
// Zero-importance pixels are never transmitted. Ties go to the lower index.
Selection select_pixels(std::span<const Real> draft, std::optional<std::span<const Real>> weights, Real fraction,
                        SketchState& state);
Selection select_pixels(const Sketch& draft, const FeedbackSketch* feedback, Real fraction, SketchState& state);

// Trained sender for one interpretability level.
class SenderModel {
public:
  SenderModel(SenderConfig cfg, ParamSet params, Real a);

  const SenderConfig& config() const noexcept { return cfg_; }
  const ParamSet& params() const noexcept { return params_; }
  ParamSet& params() noexcept { return params_; }
  Real a() const noexcept { return a_; }

  // Graph forward from image to the draft sketch {H, W}.
  ad::Var forward(ad::Graph& g, const BoundParams& p, const Tensor& image, const Tensor& geo, Real cumulative) const;

  Tensor fusion(const Tensor& image) const;
  Sketch draft(const Tensor& fusion, Real cumulative) const;

private:
  SenderConfig cfg_;
  ParamSet params_;
  Real a_;
};

}  // namespace isqa::sender
