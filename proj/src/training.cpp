#include "isqa/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "isqa/errors.hpp"

namespace isqa::training {

using ad::Graph;
using ad::Var;

namespace {

constexpr int kPerceptualChannels[3] = {4, 8, 8};
constexpr Real kPerceptualBias = 0.1;
constexpr Real kCosineEps = 1e-12;

std::string fmt(Real v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Var darkness(Graph& g, Var sketch, int h, int w) {
  return g.reshape(g.add_scalar(g.scale(sketch, -1), 1), {1, h, w});
}

Var cosine(Graph& g, Var a, Var b) {
  Var dot = g.sum(g.mul(a, b));
  Var norms = g.mul(g.sqrt(g.sum(g.mul(a, a))), g.sqrt(g.sum(g.mul(b, b))));
  return g.div(dot, g.clamp(norms, kCosineEps, std::numeric_limits<Real>::max()));
}

void check_finite(Real v, const char* what, int epoch, std::size_t step, int record) {
  if (!std::isfinite(v)) {
    throw TrainingError(std::string("non-finite ") + what + " at epoch " + std::to_string(epoch) + ", step " +
                        std::to_string(step) + ", record " + std::to_string(record));
  }
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(0, static_cast<std::int64_t>(i - 1))]);
  return order;
}

class Optimizer {
public:
  explicit Optimizer(const TrainConfig& cfg) : use_adam_(cfg.optimizer == "adam"), adam_(cfg.learning_rate), sgd_(cfg.learning_rate) {}
  void step(ParamSet& p, const ParamSet& g) { use_adam_ ? adam_.step(p, g) : sgd_.step(p, g); }

private:
  bool use_adam_;
  Adam adam_;
  Sgd sgd_;
};

void freeze_vision(ParamSet& grad) {
  for (auto& [name, t] : grad.entries())
    if (name.rfind("v.", 0) == 0) t = Tensor::zeros(t.shape());
}

}  // namespace

Var loss_answer(Graph& g, Var scores, std::span<const Real> target) {
  const auto& shape = g.shape(scores);
  if (shape_size(shape) != target.size()) {
    throw DimensionError("answer target has " + std::to_string(target.size()) + " entries, scores " +
                         shape_to_string(shape));
  }
  Tensor t(shape, std::vector<Real>(target.begin(), target.end()));
  Tensor one_minus_t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) one_minus_t[i] = 1 - t[i];
  Var p = g.clamp(scores, kProbClamp, 1 - kProbClamp);
  Var pos = g.mul(g.constant(std::move(t)), g.log(p));
  Var neg = g.mul(g.constant(std::move(one_minus_t)), g.log(g.add_scalar(g.scale(p, -1), 1)));
  return g.scale(g.mean(g.add(pos, neg)), -1);
}

Real loss_answer(std::span<const Real> scores, std::span<const Real> target) {
  if (scores.size() != target.size() || scores.empty()) throw DimensionError("answer loss length mismatch");
  Real acc = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const Real p = std::clamp(scores[i], kProbClamp, 1 - kProbClamp);
    acc += target[i] * std::log(p) + (1 - target[i]) * std::log(1 - p);
  }
  return -acc / static_cast<Real>(scores.size());
}

std::vector<Real> one_hot_answer(int answer) {
  const auto n = shapeworld::answer_vocabulary().size();
  if (answer < 0 || static_cast<std::size_t>(answer) >= n) throw ContractError("answer index out of range");
  std::vector<Real> t(n, 0);
  t[static_cast<std::size_t>(answer)] = 1;
  return t;
}

PerceptualEncoder::PerceptualEncoder(std::uint64_t seed, int height, int width)
    : seed_(seed), height_(height), width_(width) {
  if (height % 8 != 0 || width % 8 != 0) throw ConfigError("perceptual encoder needs dims divisible by 8");
  Rng rng(seed);
  int in = 1;
  for (int l = 0; l < 3; ++l) {
    const int out = kPerceptualChannels[l];
    weights_.add("l" + std::to_string(l) + ".w", init_weight(rng, {out, in, 3, 3}, in * 9));
    weights_.add("l" + std::to_string(l) + ".b", Tensor({out}, kPerceptualBias));
    in = out;
  }
}

PerceptualEncoder::Features PerceptualEncoder::encode(Graph& g, Var sketch) const {
  BoundParams p(g, weights_, false);
  Features f;
  Var x = darkness(g, sketch, height_, width_);
  std::vector<Var> pools;
  for (int l = 0; l < 3; ++l) {
    const std::string n = "l" + std::to_string(l);
    x = g.relu(g.conv2d(x, p[n + ".w"], p[n + ".b"], 2, 1));
    f.layers.push_back(x);
    const auto& s = g.shape(x);
    pools.push_back(g.reshape(g.avg_pool2d(x, s[1]), {s[0]}));
  }
  f.pooled = g.concat(pools);
  return f;
}

PerceptualEncoder::Values PerceptualEncoder::encode(const Sketch& sketch) const {
  if (sketch.height != height_ || sketch.width != width_) throw DimensionError("perceptual encoder canvas mismatch");
  Graph g;
  Features f = encode(g, g.constant(Tensor({height_, width_}, sketch.pixels)));
  Values v;
  for (Var l : f.layers) v.layers.push_back(g.value(l));
  v.pooled = g.value(f.pooled);
  return v;
}

Real cosine_similarity(std::span<const Real> a, std::span<const Real> b) {
  if (a.size() != b.size()) throw DimensionError("cosine of vectors with different lengths");
  Real dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::max(std::sqrt(na) * std::sqrt(nb), kCosineEps);
}

Var loss_perceptual(Graph& g, Var sketch, const PerceptualEncoder::Values& reference, const PerceptualEncoder& encoder) {
  PerceptualEncoder::Features f = encoder.encode(g, sketch);
  if (f.layers.size() != reference.layers.size()) throw DimensionError("reference features have wrong depth");
  Var total = g.constant(Tensor::scalar(0));
  for (std::size_t l = 0; l < f.layers.size(); ++l) {
    Var diff = g.sub(f.layers[l], g.constant(reference.layers[l]));
    total = g.add(total, g.mean(g.mul(diff, diff)));
  }
  return g.sub(total, cosine(g, f.pooled, g.constant(reference.pooled)));
}

Real loss_perceptual(const Sketch& sketch, const Sketch& reference, const PerceptualEncoder& encoder) {
  if (sketch.height != reference.height || sketch.width != reference.width) {
    throw DimensionError("sketch and reference differ in size");
  }
  const auto a = encoder.encode(sketch), b = encoder.encode(reference);
  Real total = 0;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    Real sq = 0;
    for (std::size_t i = 0; i < a.layers[l].size(); ++i) {
      const Real d = a.layers[l][i] - b.layers[l][i];
      sq += d * d;
    }
    total += sq / static_cast<Real>(a.layers[l].size());
  }
  return total - cosine_similarity(a.pooled.data(), b.pooled.data());
}

Real total_loss(Real answer_loss, Real perceptual_loss, Real a) {
  if (!(a >= 0 && a <= 1)) throw ContractError("interpretability level a must lie in [0,1]");
  return answer_loss + balance(a) * perceptual_loss;
}

Var total_loss(Graph& g, Var answer_loss, Var perceptual_loss, Real a) {
  if (!(a >= 0 && a <= 1)) throw ContractError("interpretability level a must lie in [0,1]");
  if (a == 0) return answer_loss;
  return g.add(answer_loss, g.scale(perceptual_loss, balance(a)));
}

Var straight_through(Graph& g, Var draft, Real fraction) {
  const Tensor& d = g.value(draft);
  if (d.rank() != 2) throw DimensionError("draft sketch must be {H, W}");
  sender::SketchState state(d.dim(0), d.dim(1));
  const sender::Selection sel = sender::select_pixels(d.data(), std::nullopt, fraction, state);
  Tensor mask(d.shape());
  for (std::size_t i : sel.indices) mask[i] = 1;
  Var kept = g.mul(g.constant(std::move(mask)), g.add_scalar(g.scale(draft, -1), 1));
  return g.add_scalar(g.scale(kept, -1), 1);
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.a >= 0 && cfg.a <= 1)) throw ConfigError("a must lie in [0,1], got " + fmt(cfg.a));
  if (!(cfg.learning_rate > 0)) throw ConfigError("learning rate must be positive");
  if (cfg.batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (cfg.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (cfg.sketch_epochs < 0) throw ConfigError("sketch epochs must be >= 0");
  if (cfg.optimizer != "adam" && cfg.optimizer != "sgd") {
    throw ConfigError("unknown optimizer '" + cfg.optimizer + "' (expected adam or sgd)");
  }
  if (!(cfg.clip_norm > 0)) throw ConfigError("clip norm must be positive");
}

std::vector<Example> prepare(std::span<const shapeworld::Record> records, const PerceptualEncoder& encoder) {
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    Example e;
    e.record = &r;
    e.geometric = sender::encode_geometric(r.image);
    e.reference = shapeworld::reference_sketch(r.image);
    e.reference_features = encoder.encode(e.reference);
    e.tokens = receiver::tokenize(r.qa.question);
    e.target = one_hot_answer(r.qa.answer);
    out.push_back(std::move(e));
  }
  return out;
}

TrainResult train_variant(const TrainConfig& cfg, std::span<const Example> data, const sender::SenderConfig& scfg,
                          const receiver::ReceiverConfig& rcfg, const PerceptualEncoder& encoder,
                          const ParamSet* receiver_init, const Progress& progress) {
  validate(cfg);
  if (data.empty()) throw ConfigError("training set is empty");
  TrainResult res;
  res.sender = sender::init_sender_params(scfg, derive_seed(cfg.seed, 1));
  res.receiver = receiver_init ? *receiver_init : receiver::init_receiver_params(rcfg, derive_seed(cfg.seed, 2));
  const sender::SenderModel sender_model(scfg, res.sender, cfg.a);
  const receiver::ReceiverModel receiver_model(rcfg, res.receiver);
  Optimizer sopt(cfg), ropt(cfg);
  Rng rng(derive_seed(cfg.seed, 3));
  const auto& levels = scfg.budget_levels;

  if (cfg.sketch_epochs > 0) {
    Optimizer wopt(cfg);
    Rng wrng(derive_seed(cfg.seed, 7));
    for (int epoch = 1; epoch <= cfg.sketch_epochs; ++epoch) {
      const auto order = shuffled(data.size(), wrng);
      EpochMetrics m;
      m.epoch = epoch;
      m.warmup = true;
      for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
        const Real level =
            levels[static_cast<std::size_t>(wrng.uniform_int(0, static_cast<std::int64_t>(levels.size()) - 1))];
        ParamSet sgrad = res.sender.zeros_like();
        for (std::size_t k = start; k < end; ++k) {
          const Example& ex = data[order[k]];
          Graph g;
          BoundParams sp(g, res.sender, true);
          Var sketch = straight_through(g, sender_model.forward(g, sp, ex.record->image, ex.geometric, level), level);
          Var l2 = loss_perceptual(g, sketch, ex.reference_features, encoder);
          const Real lv = g.value(l2).item();
          check_finite(lv, "sketch loss", epoch, start, ex.record->id);
          sp.accumulate(g.backward(l2), sgrad);
          m.perceptual_loss += lv;
        }
        sgrad.scale(1.0 / static_cast<Real>(end - start));
        clip_global_norm(sgrad, cfg.clip_norm);
        wopt.step(res.sender, sgrad);
      }
      m.perceptual_loss /= static_cast<Real>(data.size());
      m.loss = m.perceptual_loss;
      if (progress) progress(m);
    }
  }

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = shuffled(data.size(), rng);
    EpochMetrics m;
    m.epoch = epoch;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const Real level = levels[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(levels.size()) - 1))];
      ParamSet sgrad = res.sender.zeros_like(), rgrad = res.receiver.zeros_like();
      for (std::size_t k = start; k < end; ++k) {
        const Example& ex = data[order[k]];
        Graph g;
        BoundParams sp(g, res.sender, true);
        BoundParams rp(g, res.receiver, cfg.train_receiver);
        Var draft = sender_model.forward(g, sp, ex.record->image, ex.geometric, level);
        Var sketch = straight_through(g, draft, level);
        receiver::Forward fw = receiver_model.forward(g, rp, ex.tokens, sketch);
        Var l1 = loss_answer(g, fw.scores, ex.target);
        Real l2_value;
        Var loss;
        if (cfg.a > 0) {
          Var l2 = loss_perceptual(g, sketch, ex.reference_features, encoder);
          l2_value = g.value(l2).item();
          loss = total_loss(g, l1, l2, cfg.a);
        } else {
          const Tensor& s = g.value(sketch);
          l2_value = loss_perceptual(Sketch{s.dim(0), s.dim(1), s.storage()}, ex.reference, encoder);
          loss = l1;
        }
        const Real lv = g.value(loss).item();
        check_finite(lv, "loss", epoch, start, ex.record->id);
        const ad::Gradients grads = g.backward(loss);
        sp.accumulate(grads, sgrad);
        if (cfg.train_receiver) rp.accumulate(grads, rgrad);
        m.loss += lv;
        m.answer_loss += g.value(l1).item();
        m.perceptual_loss += l2_value;
        correct += receiver::predict(g.value(fw.scores).data()) == ex.record->qa.answer;
      }
      const Real inv = 1.0 / static_cast<Real>(end - start);
      sgrad.scale(inv);
      rgrad.scale(inv);
      if (!cfg.train_vision) freeze_vision(rgrad);
      // one global norm over both agents
      const Real norm = std::sqrt(sgrad.squared_norm() + (cfg.train_receiver ? rgrad.squared_norm() : 0));
      if (norm > cfg.clip_norm) {
        sgrad.scale(cfg.clip_norm / norm);
        rgrad.scale(cfg.clip_norm / norm);
      }
      sopt.step(res.sender, sgrad);
      if (cfg.train_receiver) ropt.step(res.receiver, rgrad);
      if (!res.sender.all_finite() || !res.receiver.all_finite()) {
        throw TrainingError("parameters became non-finite at epoch " + std::to_string(epoch));
      }
    }
    const Real n = static_cast<Real>(data.size());
    m.loss /= n;
    m.answer_loss /= n;
    m.perceptual_loss /= n;
    m.accuracy = 100.0 * static_cast<Real>(correct) / n;
    res.curve.push_back(m);
    if (progress) progress(m);
  }
  return res;
}

std::vector<Real> cell_targets(const shapeworld::SceneSpec& scene, const receiver::ReceiverConfig& rcfg) {
  receiver::validate(rcfg);
  const int cols = rcfg.width / rcfg.grid;
  const std::size_t cells = static_cast<std::size_t>(cols) * static_cast<std::size_t>(rcfg.height / rcfg.grid);
  std::vector<Real> t(cells * kCellTargets, 0.0);
  for (const auto& o : scene.objects) {
    if (o.cx < 0 || o.cy < 0 || o.cx >= rcfg.width || o.cy >= rcfg.height) continue;
    const auto j = static_cast<std::size_t>((o.cy / rcfg.grid) * cols + o.cx / rcfg.grid);
    for (int k : {0, 1 + static_cast<int>(o.shape), 5 + static_cast<int>(o.size), 7 + static_cast<int>(o.fill)})
      t[static_cast<std::size_t>(k) * cells + j] = 1;
  }
  return t;
}

PretrainResult pretrain_vision(const TrainConfig& cfg, std::span<const Example> data,
                               const receiver::ReceiverConfig& rcfg, const Progress& progress) {
  validate(cfg);
  if (data.empty()) throw ConfigError("training set is empty");
  if (rcfg.vision_channels < kCellTargets) {
    throw ConfigError("vision pretraining needs at least " + std::to_string(kCellTargets) + " vision channels");
  }
  PretrainResult res;
  res.receiver = receiver::init_receiver_params(rcfg, derive_seed(cfg.seed, 2));
  std::vector<std::vector<Real>> targets;
  targets.reserve(data.size());
  for (const auto& ex : data) targets.push_back(cell_targets(ex.record->scene, rcfg));
  const std::size_t cells = targets.front().size() / kCellTargets;
  std::vector<std::size_t> supervised(targets.front().size());
  for (std::size_t i = 0; i < supervised.size(); ++i) supervised[i] = i;
  Optimizer opt(cfg);
  Rng rng(derive_seed(cfg.seed, 6));
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = shuffled(data.size(), rng);
    EpochMetrics m;
    m.epoch = epoch;
    std::size_t correct = 0, total = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      ParamSet grad = res.receiver.zeros_like();
      for (std::size_t k = start; k < end; ++k) {
        const Example& ex = data[order[k]];
        const auto& t = targets[order[k]];
        Graph g;
        BoundParams rp(g, res.receiver, true);
        auto vision = receiver::encode_vision(g, rp, ex.reference, rcfg);
        Var out = g.gather(vision.features, supervised);
        Var loss = loss_answer(g, out, t);
        const Real lv = g.value(loss).item();
        check_finite(lv, "vision loss", epoch, start, ex.record->id);
        rp.accumulate(g.backward(loss), grad);
        m.loss += lv;
        const auto& o = g.value(out).data();
        for (std::size_t j = 0; j < cells; ++j) {
          if (t[j] == 0) continue;
          std::size_t best = 1;
          for (std::size_t c = 2; c < 5; ++c)
            if (o[c * cells + j] > o[best * cells + j]) best = c;
          correct += t[best * cells + j] == 1;
          ++total;
        }
      }
      grad.scale(1.0 / static_cast<Real>(end - start));
      clip_global_norm(grad, cfg.clip_norm);
      opt.step(res.receiver, grad);
    }
    m.loss /= static_cast<Real>(data.size());
    m.answer_loss = m.loss;
    m.accuracy = total ? 100.0 * static_cast<Real>(correct) / static_cast<Real>(total) : 0.0;
    res.curve.push_back(m);
    if (progress) progress(m);
  }
  return res;
}

PretrainResult pretrain_receiver(const TrainConfig& cfg, std::span<const Example> data,
                                 const receiver::ReceiverConfig& rcfg, const Progress& progress,
                                 const ParamSet* init) {
  validate(cfg);
  if (data.empty()) throw ConfigError("training set is empty");
  PretrainResult res;
  res.receiver = init ? *init : receiver::init_receiver_params(rcfg, derive_seed(cfg.seed, 2));
  const receiver::ReceiverModel model(rcfg, res.receiver);
  // a frozen stem sees the same reference sketches every epoch
  std::vector<Tensor> cached;
  if (!cfg.train_vision) {
    cached.reserve(data.size());
    for (const auto& ex : data) {
      Graph g;
      BoundParams rp(g, res.receiver, false);
      cached.push_back(g.value(receiver::encode_vision(g, rp, ex.reference, rcfg).features));
    }
  }
  Optimizer opt(cfg);
  Rng rng(derive_seed(cfg.seed, 4));
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto order = shuffled(data.size(), rng);
    EpochMetrics m;
    m.epoch = epoch;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      ParamSet grad = res.receiver.zeros_like();
      for (std::size_t k = start; k < end; ++k) {
        const Example& ex = data[order[k]];
        Graph g;
        BoundParams rp(g, res.receiver, true);
        Var scores;
        if (cached.empty()) {
          scores = model.forward(g, rp, ex.tokens, ex.reference).scores;
        } else {
          scores = receiver::answer(g, rp, receiver::encode_question(g, rp, ex.tokens, rcfg),
                                    g.constant(cached[order[k]]), rcfg);
        }
        Var loss = loss_answer(g, scores, ex.target);
        const Real lv = g.value(loss).item();
        check_finite(lv, "loss", epoch, start, ex.record->id);
        rp.accumulate(g.backward(loss), grad);
        m.loss += lv;
        correct += receiver::predict(g.value(scores).data()) == ex.record->qa.answer;
      }
      grad.scale(1.0 / static_cast<Real>(end - start));
      if (!cfg.train_vision) freeze_vision(grad);
      clip_global_norm(grad, cfg.clip_norm);
      opt.step(res.receiver, grad);
    }
    m.loss /= static_cast<Real>(data.size());
    m.answer_loss = m.loss;
    m.accuracy = 100.0 * static_cast<Real>(correct) / static_cast<Real>(data.size());
    res.curve.push_back(m);
    if (progress) progress(m);
  }
  return res;
}

std::string history_csv(const std::vector<EpochMetrics>& curve) {
  std::string out = "epoch,loss,answer_loss,perceptual_loss,accuracy\n";
  for (const auto& m : curve) {
    out += std::to_string(m.epoch) + "," + fmt(m.loss) + "," + fmt(m.answer_loss) + "," + fmt(m.perceptual_loss) +
           "," + fmt(m.accuracy) + "\n";
  }
  return out;
}

void save_checkpoint(const std::string& dir, const Checkpoint& ckpt) {
  std::filesystem::create_directories(dir);
  save_params(dir, "sender", ckpt.sender);
  save_params(dir, "receiver", ckpt.receiver);
  std::ofstream manifest(std::filesystem::path(dir) / "manifest.txt");
  std::ofstream history(std::filesystem::path(dir) / "history.csv");
  if (!manifest || !history) throw IoError("cannot write checkpoint manifest in " + dir);
  manifest << "a " << fmt(ckpt.a) << "\nseed " << ckpt.seed << "\nepochs " << ckpt.epochs << "\n";
  history << history_csv(ckpt.curve);
}

Checkpoint load_checkpoint(const std::string& dir) {
  const auto path = std::filesystem::path(dir) / "manifest.txt";
  std::ifstream manifest(path);
  if (!manifest) throw IoError("missing checkpoint " + path.string());
  Checkpoint c;
  std::string key;
  while (manifest >> key) {
    if (key == "a") manifest >> c.a;
    else if (key == "seed") manifest >> c.seed;
    else if (key == "epochs") manifest >> c.epochs;
    else throw IoError("unknown manifest key '" + key + "' in " + path.string());
  }
  c.sender = load_params(dir, "sender");
  c.receiver = load_params(dir, "receiver");
  std::ifstream history(std::filesystem::path(dir) / "history.csv");
  std::string line;
  std::getline(history, line);
  while (std::getline(history, line)) {
    std::stringstream in(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5) throw IoError("bad history row '" + line + "'");
    c.curve.push_back({std::stoi(cells[0]), std::stod(cells[1]), std::stod(cells[2]), std::stod(cells[3]),
                       std::stod(cells[4])});
  }
  return c;
}

}  // namespace isqa::training
