#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "isqa/errors.hpp"
#include "isqa/training.hpp"

using namespace isqa;
using namespace isqa::training;
using ad::Graph;
using ad::Var;

namespace {

const PerceptualEncoder& encoder() {
  static const PerceptualEncoder e;
  return e;
}

const shapeworld::Dataset& tiny() {
  static const shapeworld::Dataset ds = shapeworld::build_dataset(21, 64, 16);
  return ds;
}

const std::vector<Example>& tiny_examples() {
  static const std::vector<Example> ex = prepare(tiny().train, encoder());
  return ex;
}

Sketch random_sketch(Rng& rng, int h = 64, int w = 64) {
  Sketch s = Sketch::blank(h, w);
  for (auto& v : s.pixels) v = rng.uniform();
  return s;
}

}  // namespace

TEST(AnswerLoss, PerfectPredictionIsNearZero) {
  const auto t = one_hot_answer(4);
  EXPECT_LT(loss_answer(t, t), 1e-5);
}

TEST(AnswerLoss, HalfEverywhereIsLn2) {
  const auto t = one_hot_answer(0);
  std::vector<Real> half(t.size(), 0.5);
  EXPECT_NEAR(loss_answer(half, t), std::log(2.0), 1e-15);
  EXPECT_THROW(loss_answer(std::vector<Real>(3, 0.5), t), DimensionError);
  EXPECT_THROW(one_hot_answer(-1), ContractError);
}

TEST(AnswerLoss, GradientMatchesFiniteDifferences) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto t = one_hot_answer(trial % 18);
    Tensor a({18});
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = rng.uniform(0.05, 0.95);
    Graph g;
    Var x = g.input(a);
    Var l = loss_answer(g, x, t);
    EXPECT_NEAR(g.value(l).item(), loss_answer(a.data(), t), 1e-15);
    const Tensor& grad = g.backward(l).of(x);
    for (std::size_t i = 0; i < a.size(); ++i) {
      std::vector<Real> up(a.data().begin(), a.data().end()), down = up;
      up[i] += 1e-6;
      down[i] -= 1e-6;
      const Real numeric = (loss_answer(up, t) - loss_answer(down, t)) / 2e-6;
      EXPECT_NEAR(grad[i], numeric, 1e-4);
    }
  }
}

TEST(PerceptualLoss, IdenticalInputsGiveMinusOne) {
  for (const auto& r : tiny().eval) {
    const Sketch ref = shapeworld::reference_sketch(r.image);
    EXPECT_NEAR(loss_perceptual(ref, ref, encoder()), -1.0, 1e-12);
  }
  EXPECT_THROW(loss_perceptual(Sketch::blank(64, 64), Sketch::blank(32, 32), encoder()), DimensionError);
}

TEST(PerceptualLoss, CosineOfOrthogonalVectorsIsZero) {
  const std::vector<Real> a{1, 0, 2, 0}, b{0, 3, 0, -1};
  EXPECT_EQ(cosine_similarity(a, b), 0.0);
  EXPECT_NEAR(cosine_similarity(a, a), 1.0, 1e-15);
  const std::vector<Real> zero(4, 0);
  EXPECT_EQ(cosine_similarity(zero, a), 0.0);
}

TEST(PerceptualLoss, GraphAndValueFormsAgree) {
  Rng rng(12);
  const auto& ex = tiny_examples().front();
  const Sketch s = random_sketch(rng);
  Graph g;
  Var l = loss_perceptual(g, g.constant(Tensor({64, 64}, s.pixels)), ex.reference_features, encoder());
  EXPECT_NEAR(g.value(l).item(), loss_perceptual(s, ex.reference, encoder()), 1e-12);
}

TEST(PerceptualLoss, FallsAlongInterpolationTowardReference) {
  Rng rng(13);
  for (int trial = 0; trial < 8; ++trial) {
    const Sketch ref = tiny_examples()[static_cast<std::size_t>(trial)].reference;
    const Sketch start = random_sketch(rng);
    int inversions = 0;
    Real prev = loss_perceptual(start, ref, encoder());
    for (int step = 1; step <= 10; ++step) {
      const Real t = step / 10.0;
      Sketch s = start;
      for (std::size_t i = 0; i < s.pixels.size(); ++i) s.pixels[i] = (1 - t) * start.pixels[i] + t * ref.pixels[i];
      const Real now = loss_perceptual(s, ref, encoder());
      inversions += now > prev;
      prev = now;
    }
    EXPECT_LE(inversions, 1) << "trial " << trial;
    EXPECT_NEAR(prev, -1.0, 1e-12);
  }
}

TEST(TotalLoss, BalanceIsTenA) {
  Rng rng(14);
  for (int i = 0; i < 1000; ++i) {
    const Real l1 = rng.uniform(0, 5), l2 = rng.uniform(-1, 5), a = rng.uniform();
    EXPECT_NEAR(total_loss(l1, l2, a) - l1, 10 * a * l2, 1e-12);
  }
  EXPECT_EQ(total_loss(0.7, 3.0, 0.0), 0.7);
  EXPECT_EQ(total_loss(0.7, 3.0, 0.5), 0.7 + 5 * 3.0);
  EXPECT_EQ(total_loss(0.0, 3.0, 1.0), 30.0);
  EXPECT_THROW(total_loss(0.1, 0.1, 1.5), ContractError);
  Graph g;
  Var l1 = g.constant(Tensor::scalar(0.25)), l2 = g.constant(Tensor::scalar(-0.5));
  EXPECT_EQ(g.value(total_loss(g, l1, l2, 0.3)).item(), total_loss(0.25, -0.5, 0.3));
}

TEST(StraightThrough, GradientOnlyReachesSelectedPixels) {
  Rng rng(15);
  Tensor d({16, 16});
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = rng.uniform();
  Graph g;
  Var draft = g.input(d);
  Var s = straight_through(g, draft, 0.1);
  Tensor weights({16, 16});
  for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = rng.uniform(0.5, 1.5);
  const Tensor& grad = g.backward(g.sum(g.mul(s, g.constant(weights)))).of(draft);
  const Tensor& out = g.value(s);
  std::size_t selected = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (out[i] < 1) {
      ++selected;
      EXPECT_EQ(out[i], d[i]);
      EXPECT_EQ(grad[i], weights[i]);
    } else {
      EXPECT_EQ(grad[i], 0.0);
    }
  }
  EXPECT_EQ(selected, sender::budget_pixels(0.1, 256));
}

TEST(TotalLoss, GradientDecomposesIntoAnswerAndPerceptualParts) {
  const sender::SenderConfig scfg;
  const receiver::ReceiverConfig rcfg;
  const ParamSet sp = sender::init_sender_params(scfg, 3);
  const ParamSet rp = receiver::init_receiver_params(rcfg, 4);
  const sender::SenderModel sm(scfg, sp, 1.0);
  const receiver::ReceiverModel rm(rcfg, rp);

  auto grads = [&](int which) {
    ParamSet acc = sp.zeros_like();
    for (std::size_t k = 0; k < 4; ++k) {
      const Example& ex = tiny_examples()[k];
      Graph g;
      BoundParams b(g, sp, true);
      BoundParams r(g, rp, false);
      Var sketch = straight_through(g, sm.forward(g, b, ex.record->image, ex.geometric, 0.3), 0.3);
      Var l1 = loss_answer(g, rm.forward(g, r, ex.tokens, sketch).scores, ex.target);
      Var l2 = loss_perceptual(g, sketch, ex.reference_features, encoder());
      Var root = which == 0 ? total_loss(g, l1, l2, 1.0) : which == 1 ? l1 : g.scale(l2, 10);
      b.accumulate(g.backward(root), acc);
    }
    return acc;
  };
  const ParamSet whole = grads(0), answer = grads(1), perceptual = grads(2);
  for (const auto& [name, w] : whole.entries()) {
    const Tensor &a = answer[name], &p = perceptual[name];
    for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(w[i], a[i] + p[i], 1e-5) << name;
  }
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(validate(c));
  c.a = 1.2;
  EXPECT_THROW(validate(c), ConfigError);
  c = {};
  c.optimizer = "rmsprop";
  EXPECT_THROW(validate(c), ConfigError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(validate(c), ConfigError);
  c = {};
  c.learning_rate = 0;
  EXPECT_THROW(validate(c), ConfigError);
}

TEST(TrainVariant, PragmaticAnswerLossFallsAndEncoderStaysFrozen) {
  const std::string before = encoder().digest();
  TrainConfig cfg;
  cfg.a = 0;
  cfg.epochs = 4;
  cfg.batch_size = 16;
  cfg.learning_rate = 3e-3;
  const TrainResult r = train_variant(cfg, tiny_examples(), {}, {}, encoder());
  ASSERT_EQ(r.curve.size(), 4u);
  EXPECT_LT(r.curve.back().answer_loss, r.curve.front().answer_loss);
  EXPECT_EQ(r.curve.front().loss, r.curve.front().answer_loss);
  EXPECT_EQ(encoder().digest(), before);
}

TEST(TrainVariant, FixedSeedReproducesMetrics) {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 16;
  cfg.seed = 9;
  const std::span<const Example> data(tiny_examples().data(), 32);
  const TrainResult a = train_variant(cfg, data, {}, {}, encoder());
  const TrainResult b = train_variant(cfg, data, {}, {}, encoder());
  EXPECT_EQ(a.curve.back().loss, b.curve.back().loss);
  EXPECT_EQ(a.sender.digest(), b.sender.digest());
  EXPECT_EQ(a.receiver.digest(), b.receiver.digest());
  cfg.seed = 10;
  EXPECT_NE(train_variant(cfg, data, {}, {}, encoder()).sender.digest(), a.sender.digest());
}

TEST(TrainVariant, FrozenReceiverIsNotUpdated) {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  cfg.train_receiver = false;
  const ParamSet init = receiver::init_receiver_params({}, 77);
  const TrainResult r = train_variant(cfg, std::span<const Example>(tiny_examples().data(), 16), {}, {}, encoder(), &init);
  EXPECT_EQ(r.receiver.digest(), init.digest());
  EXPECT_NE(r.sender.digest(), sender::init_sender_params({}, derive_seed(0, 1)).digest());
}

TEST(PretrainReceiver, SmoothedLossCurveFalls) {
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 16;
  cfg.learning_rate = 3e-3;
  const PretrainResult r = pretrain_receiver(cfg, tiny_examples(), {});
  ASSERT_EQ(r.curve.size(), 6u);
  std::vector<Real> smooth;
  for (std::size_t i = 0; i + 3 <= r.curve.size(); ++i)
    smooth.push_back((r.curve[i].loss + r.curve[i + 1].loss + r.curve[i + 2].loss) / 3);
  for (std::size_t i = 1; i < smooth.size(); ++i) EXPECT_LE(smooth[i], smooth[i - 1]);
}

TEST(CellTargets, MarkTheCentreCellOfEveryObject) {
  const receiver::ReceiverConfig rc;
  const int cols = rc.width / rc.grid;
  const std::size_t cells = static_cast<std::size_t>(cols * (rc.height / rc.grid));
  for (const auto& rec : tiny().train) {
    const auto t = cell_targets(rec.scene, rc);
    ASSERT_EQ(t.size(), cells * kCellTargets);
    std::size_t occupied = 0;
    for (std::size_t j = 0; j < cells; ++j) occupied += t[j] == 1;
    EXPECT_LE(occupied, rec.scene.objects.size());
    for (const auto& o : rec.scene.objects) {
      const std::size_t j = static_cast<std::size_t>((o.cy / rc.grid) * cols + o.cx / rc.grid);
      EXPECT_EQ(t[j], 1);
      EXPECT_EQ(t[(1 + static_cast<std::size_t>(o.shape)) * cells + j], 1);
      EXPECT_EQ(t[(5 + static_cast<std::size_t>(o.size)) * cells + j], 1);
      EXPECT_EQ(t[(7 + static_cast<std::size_t>(o.fill)) * cells + j], 1);
    }
    // every marked attribute sits in an occupied cell
    for (std::size_t k = 1; k < kCellTargets; ++k)
      for (std::size_t j = 0; j < cells; ++j)
        if (t[k * cells + j] == 1) EXPECT_EQ(t[j], 1);
  }
}

TEST(PretrainVision, CellLossFallsAndStaysFiniteFromEmptyScenes) {
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.learning_rate = 3e-3;
  const PretrainResult r = pretrain_vision(cfg, tiny_examples(), {});
  ASSERT_EQ(r.curve.size(), 3u);
  EXPECT_LT(r.curve.back().loss, r.curve.front().loss);
  EXPECT_TRUE(r.receiver.all_finite());
  receiver::ReceiverConfig narrow;
  narrow.vision_channels = kCellTargets - 1;
  EXPECT_THROW(pretrain_vision(cfg, tiny_examples(), narrow), ConfigError);
}

TEST(PretrainReceiver, FrozenVisionStemIsUntouched) {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 8;
  cfg.train_vision = false;
  const ParamSet init = receiver::init_receiver_params({}, 31);
  const std::span<const Example> data(tiny_examples().data(), 16);
  const PretrainResult r = pretrain_receiver(cfg, data, {}, {}, &init);
  bool head_moved = false;
  for (const auto& [name, t] : init.entries()) {
    const bool same = std::equal(t.data().begin(), t.data().end(), r.receiver[name].data().begin());
    if (name.rfind("v.", 0) == 0) EXPECT_TRUE(same) << name;
    else head_moved |= !same;
  }
  EXPECT_TRUE(head_moved);

  cfg.a = 0;
  const TrainResult joint = train_variant(cfg, data, {}, {}, encoder(), &init);
  for (const auto& [name, t] : init.entries())
    if (name.rfind("v.", 0) == 0)
      EXPECT_TRUE(std::equal(t.data().begin(), t.data().end(), joint.receiver[name].data().begin())) << name;
}

TEST(TrainVariant, SketchWarmupFitsTheReferenceAndSkipsTheReceiver) {
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.sketch_epochs = 3;
  cfg.batch_size = 8;
  cfg.learning_rate = 3e-3;
  const ParamSet init = receiver::init_receiver_params({}, 5);
  std::vector<EpochMetrics> seen;
  const TrainResult r = train_variant(cfg, std::span<const Example>(tiny_examples().data(), 32), {}, {}, encoder(),
                                      &init, [&](const EpochMetrics& m) { seen.push_back(m); });
  EXPECT_TRUE(r.curve.empty());
  ASSERT_EQ(seen.size(), 3u);
  for (const auto& m : seen) EXPECT_TRUE(m.warmup);
  EXPECT_LT(seen.back().perceptual_loss, seen.front().perceptual_loss);
  EXPECT_EQ(r.receiver.digest(), init.digest());
  cfg.sketch_epochs = -1;
  EXPECT_THROW(validate(cfg), ConfigError);
}

TEST(Checkpoint, RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "isqa_ckpt_test";
  std::filesystem::remove_all(dir);
  Checkpoint c;
  c.a = 0.5;
  c.seed = 42;
  c.epochs = 2;
  c.sender = sender::init_sender_params({}, 1);
  c.receiver = receiver::init_receiver_params({}, 2);
  c.curve = {{1, 0.5, 0.25, 0.125, 33.25}, {2, 0.1 + 0.2, 0.2, 0.1, 50}};
  save_checkpoint(dir.string(), c);
  const Checkpoint back = load_checkpoint(dir.string());
  EXPECT_EQ(back.a, c.a);
  EXPECT_EQ(back.seed, c.seed);
  EXPECT_EQ(back.epochs, c.epochs);
  EXPECT_EQ(back.sender.digest(), c.sender.digest());
  EXPECT_EQ(back.receiver.digest(), c.receiver.digest());
  ASSERT_EQ(back.curve.size(), 2u);
  EXPECT_EQ(back.curve[1].loss, c.curve[1].loss);
  EXPECT_EQ(history_csv(back.curve), history_csv(c.curve));
  EXPECT_THROW(load_checkpoint((dir / "missing").string()), IoError);
  std::filesystem::remove_all(dir);
}
