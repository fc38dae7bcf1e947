#include <gtest/gtest.h>

#include <cmath>

#include "isqa/errors.hpp"
#include "isqa/feedback.hpp"
#include "isqa/shapeworld.hpp"

using namespace isqa;
using namespace isqa::feedback;
using ad::Graph;
using ad::Var;
using receiver::Proposal;

namespace {

Proposal box_proposal(int h, int w, Box b) {
  Proposal p;
  p.box = b;
  p.mask.assign(static_cast<std::size_t>(h) * w, 0);
  for (int y = b.y1; y < b.y2; ++y)
    for (int x = b.x1; x < b.x2; ++x) p.mask[static_cast<std::size_t>(y) * w + x] = 1;
  p.area = b.area();
  return p;
}

Sketch random_sketch(Rng& rng, Real density) {
  Sketch s = Sketch::blank(64, 64);
  for (auto& v : s.pixels)
    if (rng.bernoulli(density)) v = rng.uniform(0, 0.9);
  return s;
}

}  // namespace

TEST(ChannelWeights, DetachedHeadGivesZero) {
  Graph g;
  Var features = g.input(Tensor({3, 4}, 1.0));
  Var scores = g.sigmoid(g.constant(Tensor({5}, 0.3)));
  for (Real b : channel_weights(g, scores, features, 1)) EXPECT_EQ(b, 0.0);
  EXPECT_THROW(channel_weights(g, Var{}, features, 1), ContractError);
}

TEST(ChannelWeights, LinearHeadGivesProposalCountTimesCoefficient) {
  Rng rng(3);
  const int K = 5, J = 64;
  Tensor f({K, J}), c({K, 1});
  for (auto& v : f.data()) v = rng.uniform(-1, 1);
  for (auto& v : c.data()) v = rng.uniform(-2, 2);
  Graph g;
  Var features = g.input(f);
  Var target = g.reshape(g.sum(g.mul(features, g.constant(c))), {1});
  Var other = g.constant(Tensor({1}, -1e9));
  Var parts[2] = {target, other};
  Var scores = g.concat(parts);
  const auto beta = channel_weights(g, scores, features, 1);
  for (int k = 0; k < K; ++k) EXPECT_NEAR(beta[k], J * c[k], 1e-12 * J);
}

TEST(ChannelWeights, AgreesWithFiniteDifferences) {
  const receiver::ReceiverConfig cfg;
  Rng rng(40);
  const auto& vocab = shapeworld::answer_vocabulary();
  for (int instance = 0; instance < 50; ++instance) {
    receiver::ReceiverModel model(cfg, receiver::init_receiver_params(cfg, derive_seed(77, instance)));
    const auto q = receiver::tokenize(instance % 2 ? std::vector<std::string>{"how", "many", "star"}
                                                   : std::vector<std::string>{"what", "is", "the", "fill", "of", "the", "circle"});
    const Sketch s = random_sketch(rng, 0.15);
    const int l = 1 + instance % 3;

    Graph g;
    BoundParams p(g, model.params(), false);
    receiver::Forward fw = model.forward(g, p, q, s, true);
    const auto beta = channel_weights(g, fw.scores, fw.vision.features, l);
    const Tensor base = g.value(fw.vision.features);
    std::vector<Real> sc = g.value(fw.scores).storage();
    std::vector<std::size_t> top(vocab.size());
    for (std::size_t i = 0; i < top.size(); ++i) top[i] = i;
    std::stable_sort(top.begin(), top.end(), [&](std::size_t a, std::size_t b) { return sc[a] > sc[b]; });
    top.resize(static_cast<std::size_t>(l));

    auto target_at = [&](int channel, Real delta) {
      Tensor f = base;
      for (int j = 0; j < f.dim(1); ++j) f.at(channel, j) += delta;
      Graph h;
      BoundParams hp(h, model.params(), false);
      const Tensor& out = h.value(receiver::answer(h, hp, receiver::encode_question(h, hp, q, cfg), h.constant(f), cfg));
      Real t = 0;
      for (std::size_t i : top) t += out[i];
      return t;
    };
    const Real eps = 1e-5;
    for (int k = 0; k < base.dim(0); ++k) {
      const Real numeric = (target_at(k, eps) - target_at(k, -eps)) / (2 * eps);
      EXPECT_LE(std::abs(beta[k] - numeric), 1e-3 * std::abs(numeric) + 1e-8) << "instance " << instance << " k " << k;
    }
  }
}

TEST(ProposalWeights, ReluArithmetic) {
  Tensor f({1, 3}, std::vector<Real>{2, -3, 0.5});
  EXPECT_EQ(proposal_weights(std::vector<Real>{1}, f), (std::vector<Real>{2, 0, 0.5}));
  for (Real w : proposal_weights(std::vector<Real>{0}, f)) EXPECT_EQ(w, 0.0);
  EXPECT_THROW(proposal_weights(std::vector<Real>{1, 2}, f), DimensionError);
}

TEST(ProposalWeights, InvariantToPerturbationOrthogonalToBeta) {
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    const std::vector<Real> beta = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    Tensor f({3, 1});
    for (auto& v : f.data()) v = rng.uniform(-1, 1);
    // (b1, -b0, 0) and (0, b2, -b1) span the complement of beta
    const Real s1 = rng.uniform(-1, 1), s2 = rng.uniform(-1, 1);
    Tensor moved = f;
    moved[0] += s1 * beta[1];
    moved[1] += -s1 * beta[0] + s2 * beta[2];
    moved[2] += -s2 * beta[1];
    EXPECT_NEAR(proposal_weights(beta, f)[0], proposal_weights(beta, moved)[0], 1e-12);
  }
}

TEST(FeedbackMasks, AreaNormalisedAndAdditive) {
  auto props = receiver::grid_proposals({});
  std::vector<Real> w(64, 0);
  Tensor zero = feedback_masks(w, props, 64, 64);
  for (Real v : zero.data()) EXPECT_EQ(v, 0.0);
  w[10] = 8;
  Tensor one = feedback_masks(w, props, 64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) EXPECT_EQ(one.at(y, x), props[10].box.covers(y, x) ? 0.125 : 0.0);

  std::vector<Proposal> overlap = {box_proposal(8, 8, {0, 0, 4, 4, 0}), box_proposal(8, 8, {2, 2, 8, 6, 0}),
                                   box_proposal(8, 8, {0, 0, 8, 8, 0})};
  const std::vector<Real> ow = {1.6, 4.8, 6.4};
  Tensor heat = feedback_masks(ow, overlap, 8, 8);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      Real expected = 0;
      for (std::size_t j = 0; j < overlap.size(); ++j)
        if (overlap[j].box.covers(y, x)) expected += ow[j] / overlap[j].area;
      EXPECT_NEAR(heat.at(y, x), expected, 1e-15);
    }

  std::vector<Proposal> small = {box_proposal(8, 8, {0, 0, 2, 2, 0})};
  std::vector<Proposal> big = {box_proposal(8, 8, {0, 0, 4, 2, 0})};
  EXPECT_EQ(feedback_masks(std::vector<Real>{3}, big, 8, 8).at(0, 0) * 2,
            feedback_masks(std::vector<Real>{3}, small, 8, 8).at(0, 0));

  Proposal empty = box_proposal(8, 8, {0, 0, 0, 0, 0});
  EXPECT_THROW(feedback_masks(std::vector<Real>{1}, std::vector<Proposal>{empty}, 8, 8), ContractError);
  EXPECT_THROW(feedback_masks(std::vector<Real>{1, 2}, small, 8, 8), DimensionError);
}

TEST(EncodeFeedback, TopBoxesByNormalisedWeight) {
  std::vector<Proposal> props = {box_proposal(2, 2, {0, 0, 1, 1, 0}), box_proposal(2, 2, {1, 0, 2, 1, 0}),
                                 box_proposal(2, 2, {0, 1, 1, 2, 0}), box_proposal(2, 2, {1, 1, 2, 2, 0})};
  Tensor heat({2, 2}, std::vector<Real>{0.3, 0.1, 0.0, 0.2});
  FeedbackSketch fb = encode_feedback(heat, props, 2);
  ASSERT_EQ(fb.count(), 2u);
  EXPECT_EQ(fb.boxes[0], (Box{0, 0, 1, 1, 0.3}));
  EXPECT_EQ(fb.boxes[1], (Box{1, 1, 2, 2, 0.2}));
  EXPECT_TRUE(encode_feedback(Tensor({2, 2}), props, 3).empty());
  EXPECT_THROW(encode_feedback(heat, props, 0), ContractError);
}

TEST(EncodeFeedback, RasterisingReproducesKeptCells) {
  Rng rng(9);
  auto props = receiver::grid_proposals({});
  for (int t = 0; t < 20; ++t) {
    std::vector<Real> w(64);
    for (auto& v : w) v = rng.bernoulli(0.6) ? 0.0 : rng.uniform(0, 3);
    const Tensor heat = feedback_masks(w, props, 64, 64);
    const int h_max = static_cast<int>(rng.uniform_int(1, 8));
    FeedbackSketch fb = encode_feedback(heat, props, h_max);
    EXPECT_LE(fb.count(), static_cast<std::size_t>(h_max));
    const auto raster = weight_map(fb);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        bool kept = false;
        for (const auto& b : fb.boxes) kept |= b.covers(y, x);
        const Real v = raster[static_cast<std::size_t>(y) * 64 + x];
        if (kept) EXPECT_NEAR(v, heat.at(y, x), 1e-15);
        else EXPECT_EQ(v, 0.0);
      }
    for (const auto& b : fb.boxes) EXPECT_GT(b.weight, 0.0);
    EXPECT_EQ(feedback_cost(fb), 5 * fb.count());
    EXPECT_EQ(feedback_to_wire(fb).size(), 4 + 12 * fb.count());
  }
}

TEST(WeightAt, SumsCoveringBoxes) {
  FeedbackSketch fb{8, 8, {Box{0, 0, 4, 4, 0.4}, Box{2, 2, 6, 6, 0.1}}};
  EXPECT_EQ(weight_at(fb, 7, 7), 0.0);
  EXPECT_EQ(weight_at(fb, 1, 1), 0.4);
  EXPECT_EQ(weight_at(fb, 3, 3), 0.5);
  EXPECT_THROW(weight_at(fb, 8, 0), ContractError);
  EXPECT_THROW(weight_at(fb, 0, -1), ContractError);
  const auto map = weight_map(fb);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) EXPECT_EQ(map[static_cast<std::size_t>(y) * 8 + x], weight_at(fb, y, x));
}

TEST(Attribute, FullChainOnReceiverIsNonNegative) {
  const receiver::ReceiverConfig cfg;
  receiver::ReceiverModel model(cfg, receiver::init_receiver_params(cfg, 13));
  Rng rng(14);
  for (int t = 0; t < 10; ++t) {
    Graph g;
    BoundParams p(g, model.params(), false);
    auto fw = model.forward(g, p, receiver::tokenize({"how", "many", "square"}), random_sketch(rng, 0.1), true);
    Attribution a = attribute(g, fw, {}, 64, 64);
    EXPECT_EQ(a.beta.size(), static_cast<std::size_t>(cfg.vision_channels));
    for (Real w : a.proposal_weights) EXPECT_GE(w, 0.0);
    for (Real v : a.heat.data()) EXPECT_GE(v, 0.0);
    EXPECT_LE(a.sketch.count(), 5u);
  }
  EXPECT_THROW(validate(FeedbackConfig{0, 5}), ConfigError);
  EXPECT_THROW(validate(FeedbackConfig{1, 0}), ConfigError);
}
