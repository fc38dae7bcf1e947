#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "isqa/autodiff.hpp"
#include "isqa/params.hpp"
#include "isqa/receiver.hpp"
#include "isqa/sender.hpp"
#include "isqa/shapeworld.hpp"

namespace isqa::training {

inline constexpr Real kProbClamp = 1e-7;

// Mean binary cross-entropy over answer entries, predictions clamped to [1e-7, 1-1e-7].
ad::Var loss_answer(ad::Graph& g, ad::Var scores, std::span<const Real> target);
Real loss_answer(std::span<const Real> scores, std::span<const Real> target);
std::vector<Real> one_hot_answer(int answer);

// Frozen random conv stack standing in for a pretrained perceptual network.
// Reads darkness (1 - sketch) and exposes per-layer activations plus a pooled vector.
class PerceptualEncoder {
public:
  explicit PerceptualEncoder(std::uint64_t seed = 0x5eed, int height = 64, int width = 64);

  struct Features {
    std::vector<ad::Var> layers;
    ad::Var pooled;
  };
  Features encode(ad::Graph& g, ad::Var sketch) const;  // sketch {H, W}

  struct Values {
    std::vector<Tensor> layers;
    Tensor pooled;
  };
  Values encode(const Sketch& sketch) const;

  const ParamSet& weights() const noexcept { return weights_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::string digest() const { return weights_.digest(); }

private:
  std::uint64_t seed_;
  int height_, width_;
  ParamSet weights_;
};

Real cosine_similarity(std::span<const Real> a, std::span<const Real> b);

// Sum over layers of the mean squared feature difference, minus the cosine
// similarity of the pooled vectors. Identical inputs give exactly -1 up to rounding.
ad::Var loss_perceptual(ad::Graph& g, ad::Var sketch, const PerceptualEncoder::Values& reference,
                        const PerceptualEncoder& encoder);
Real loss_perceptual(const Sketch& sketch, const Sketch& reference, const PerceptualEncoder& encoder);

inline Real balance(Real a) { return 10 * a; }
Real total_loss(Real answer_loss, Real perceptual_loss, Real a);
ad::Var total_loss(ad::Graph& g, ad::Var answer_loss, ad::Var perceptual_loss, Real a);

// Hard top-k selection whose backward pass reaches the selected pixels only:
// S = 1 - m * (1 - draft) with the mask m held constant.
ad::Var straight_through(ad::Graph& g, ad::Var draft, Real fraction);

struct TrainConfig {
  Real a = 0.5;
  Real learning_rate = 1e-3;
  int batch_size = 32;
  int epochs = 20;
  std::uint64_t seed = 0;
  std::string optimizer = "adam";  // or "sgd"
  Real clip_norm = 5.0;
  bool train_receiver = true;
  bool train_vision = true;  // receiver vision stem, the v.* parameters
  // Leading epochs that fit the sender to the reference sketch with the
  // perceptual loss alone; the receiver is not run. Not part of the curve.
  int sketch_epochs = 0;
};

void validate(const TrainConfig& cfg);

struct EpochMetrics {
  int epoch = 0;
  Real loss = 0;
  Real answer_loss = 0;
  Real perceptual_loss = 0;
  Real accuracy = 0;  // percent on the training examples seen this epoch
  bool warmup = false;  // a sketch_epochs pass
};

struct TrainResult {
  ParamSet sender;
  ParamSet receiver;
  std::vector<EpochMetrics> curve;
};

// Precomputed per-example inputs that never change during training.
struct Example {
  const shapeworld::Record* record = nullptr;
  Tensor geometric;
  Sketch reference;
  PerceptualEncoder::Values reference_features;
  std::vector<int> tokens;
  std::vector<Real> target;
};
std::vector<Example> prepare(std::span<const shapeworld::Record> records, const PerceptualEncoder& encoder);

using Progress = std::function<void(const EpochMetrics&)>;

TrainResult train_variant(const TrainConfig& cfg, std::span<const Example> data, const sender::SenderConfig& scfg,
                          const receiver::ReceiverConfig& rcfg, const PerceptualEncoder& encoder,
                          const ParamSet* receiver_init = nullptr, const Progress& progress = {});

struct PretrainResult {
  ParamSet receiver;
  std::vector<EpochMetrics> curve;
};

// Per proposal cell: object present, shape (4), size (2) and fill (3) of the
// object whose centre lies in the cell. Laid out {10, J} like the vision features.
inline constexpr int kCellTargets = 10;
std::vector<Real> cell_targets(const shapeworld::SceneSpec& scene, const receiver::ReceiverConfig& rcfg);

// Vision stem only: the first kCellTargets feature channels are fitted to
// cell_targets. Returns a full receiver parameter set.
PretrainResult pretrain_vision(const TrainConfig& cfg, std::span<const Example> data,
                               const receiver::ReceiverConfig& rcfg, const Progress& progress = {});

// Receiver only, on full reference sketches, answer loss only. Starts from
// `init` when given, otherwise from a fresh initialisation.
PretrainResult pretrain_receiver(const TrainConfig& cfg, std::span<const Example> data,
                                 const receiver::ReceiverConfig& rcfg, const Progress& progress = {},
                                 const ParamSet* init = nullptr);

// Checkpoint layout: manifest.txt, history.csv, sender_* and receiver_* tensor blobs.
struct Checkpoint {
  Real a = 0;
  std::uint64_t seed = 0;
  int epochs = 0;
  ParamSet sender;
  ParamSet receiver;
  std::vector<EpochMetrics> curve;
};
void save_checkpoint(const std::string& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& dir);
std::string history_csv(const std::vector<EpochMetrics>& curve);

}  // namespace isqa::training
