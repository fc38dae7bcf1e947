#include "isqa/commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "isqa/errors.hpp"
#include "isqa/evaluation.hpp"
#include "isqa/service.hpp"

namespace isqa::commands {

namespace fs = std::filesystem;

namespace {

std::ostream& log(const Context& ctx) { return ctx.log ? *ctx.log : std::cerr; }

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

void snapshot(const Context& ctx) {
  ctx.config.validate();
  write_text(fs::path(ctx.out) / "resolved_config.txt", ctx.config.resolved_text());
}

shapeworld::Dataset load_data(const Context& ctx) {
  const std::string dir = data_dir(ctx);
  if (!fs::exists(fs::path(dir) / "manifest_train.tsv")) throw IoError("missing dataset " + dir + " (run gen-data)");
  return shapeworld::load_dataset(dir);
}

training::TrainConfig train_config(const RunConfig& c) {
  training::TrainConfig t;
  t.a = c.real("train.a");
  t.seed = c.seed("train.seed");
  t.learning_rate = c.real("train.lr");
  t.batch_size = static_cast<int>(c.integer("train.batch"));
  t.epochs = static_cast<int>(c.integer("train.epochs"));
  t.optimizer = c.str("train.optimizer");
  t.clip_norm = c.real("train.clip");
  t.sketch_epochs = static_cast<int>(c.integer("train.sketch_epochs"));
  t.train_vision = c.str("train.vision") == "trainable";
  return t;
}

training::PerceptualEncoder encoder(const RunConfig& c) {
  return training::PerceptualEncoder(c.seed("model.perceptual_seed"));
}

training::Progress progress(const Context& ctx, const std::string& what) {
  return [&ctx, what](const training::EpochMetrics& m) {
    char line[200];
    std::snprintf(line, sizeof line, "%s%s epoch %d loss %.5f answer %.5f perceptual %.5f accuracy %.2f\n", what.c_str(),
                  m.warmup ? " sketch warmup" : "", m.epoch, m.loss, m.answer_loss, m.perceptual_loss, m.accuracy);
    log(ctx) << line << std::flush;
  };
}

struct LoadedCheckpoint {
  training::Checkpoint ckpt;
  sender::SenderModel sender;
  receiver::ReceiverModel receiver;
};

LoadedCheckpoint load_models(const std::string& dir) {
  if (!fs::exists(fs::path(dir) / "manifest.txt")) throw IoError("missing checkpoint " + dir);
  training::Checkpoint c = training::load_checkpoint(dir);
  sender::SenderModel s({}, c.sender, c.a);
  receiver::ReceiverModel r({}, c.receiver);
  return {std::move(c), std::move(s), std::move(r)};
}

std::string default_checkpoint(const Context& ctx, const std::string& key) {
  const std::string v = ctx.config.str(key);
  return v.empty() ? checkpoint_dir(ctx, "prageo") : checkpoint_dir(ctx, v);
}

}  // namespace

std::string data_dir(const Context& ctx) {
  const std::string d = ctx.config.str("data.dir");
  return d.empty() ? (fs::path(ctx.out) / "data").string() : d;
}

std::string checkpoint_dir(const Context& ctx, const std::string& name) {
  if (name.find('/') != std::string::npos) return name;
  return (fs::path(ctx.out) / "checkpoints" / name).string();
}

std::string variant_name(Real a) {
  if (a == 0) return "pragmatic";
  if (a == 0.5) return "prageo";
  if (a == 1) return "geometric";
  char buf[32];
  std::snprintf(buf, sizeof buf, "a%g", a);
  return buf;
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return digest_hex(fnv1a64(bytes));
}

std::string gen_data(const Context& ctx) {
  snapshot(ctx);
  const auto& c = ctx.config;
  shapeworld::SceneConfig scene;
  scene.min_objects = static_cast<int>(c.integer("data.min_objects"));
  scene.max_objects = static_cast<int>(c.integer("data.max_objects"));
  const auto ds = shapeworld::build_dataset(c.seed("data.seed"), static_cast<int>(c.integer("data.train")),
                                            static_cast<int>(c.integer("data.eval")), scene);
  const std::string dir = data_dir(ctx);
  shapeworld::write_dataset(dir, ds);
  const std::string digest = shapeworld::manifest_digest(dir);
  log(ctx) << "wrote " << ds.train.size() << " train and " << ds.eval.size() << " eval records to " << dir << "\n";
  return digest;
}

void pretrain(const Context& ctx) {
  snapshot(ctx);
  const auto& c = ctx.config;
  const auto ds = load_data(ctx);
  const auto enc = encoder(c);
  const auto examples = training::prepare(ds.train, enc);
  training::TrainConfig t = train_config(c);
  t.batch_size = static_cast<int>(c.integer("pretrain.batch"));
  t.epochs = static_cast<int>(c.integer("pretrain.vision_epochs"));
  t.learning_rate = c.real("pretrain.vision_lr");
  const auto vision = training::pretrain_vision(t, examples, {}, progress(ctx, "pretrain vision"));
  t.epochs = static_cast<int>(c.integer("pretrain.epochs"));
  t.learning_rate = c.real("pretrain.lr");
  t.train_vision = false;
  const auto res = training::pretrain_receiver(t, examples, {}, progress(ctx, "pretrain"), &vision.receiver);
  const fs::path dir = fs::path(ctx.out) / "pretrain";
  fs::create_directories(dir);
  save_params(dir.string(), "receiver", res.receiver);
  write_text(dir / "history_vision.csv", training::history_csv(vision.curve));
  write_text(dir / "history.csv", training::history_csv(res.curve));
  log(ctx) << "pretrained receiver saved to " << dir.string() << "\n";
}

void train(const Context& ctx) {
  snapshot(ctx);
  const auto& c = ctx.config;
  auto ds = load_data(ctx);
  const auto limit = static_cast<std::size_t>(c.integer("train.limit"));
  if (limit > 0 && ds.train.size() > limit) ds.train.resize(limit);
  const auto enc = encoder(c);
  const auto examples = training::prepare(ds.train, enc);
  training::TrainConfig t = train_config(c);
  std::optional<ParamSet> init;
  const fs::path pre = fs::path(ctx.out) / "pretrain";
  if (c.str("train.warm_start") == "true") {
    if (fs::exists(pre / "receiver_tensors.txt")) {
      init = load_params(pre.string(), "receiver");
      log(ctx) << "warm start from " << pre.string() << "\n";
    } else {
      log(ctx) << "no pretrained receiver in " << pre.string() << "; receiver starts from scratch\n";
    }
  }
  if (!init && !t.train_vision) {
    log(ctx) << "untrained vision stem is trained along with the rest of the receiver\n";
    t.train_vision = true;
  }
  const std::string name = c.str("train.name").empty() ? variant_name(t.a) : c.str("train.name");
  const auto res = training::train_variant(t, examples, {}, {}, enc, init ? &*init : nullptr,
                                           progress(ctx, "train " + name));
  const std::string dir = checkpoint_dir(ctx, name);
  training::save_checkpoint(dir, {t.a, t.seed, t.epochs, res.sender, res.receiver, res.curve});
  log(ctx) << "checkpoint written to " << dir << "\n";
}

std::string eval(const Context& ctx) {
  snapshot(ctx);
  const auto& c = ctx.config;
  std::vector<std::string> dirs;
  for (const auto& name : c.list("eval.checkpoints")) {
    dirs.push_back(checkpoint_dir(ctx, name));
    if (!fs::exists(fs::path(dirs.back()) / "manifest.txt")) throw IoError("missing checkpoint " + dirs.back());
  }
  if (dirs.empty()) throw ConfigError("eval.checkpoints is empty");
  auto ds = load_data(ctx);
  const auto limit = static_cast<std::size_t>(c.integer("eval.limit"));
  if (limit > 0 && ds.eval.size() > limit) ds.eval.resize(limit);

  std::vector<LoadedCheckpoint> models;
  for (const auto& d : dirs) models.push_back(load_models(d));
  std::vector<evaluation::Variant> variants;
  for (std::size_t i = 0; i < models.size(); ++i)
    variants.push_back({fs::path(dirs[i]).filename().string(), models[i].ckpt.seed, &models[i].sender, &models[i].receiver});

  evaluation::SweepConfig sc;
  sc.budgets = c.reals("eval.budgets");
  sc.rounds = c.integers("eval.rounds");
  sc.policy = c.str("episode.policy");
  sc.feedback.max_boxes = static_cast<int>(c.integer("episode.max_boxes"));
  sc.feedback.top_answers = static_cast<int>(c.integer("episode.top_answers"));
  sc.trace_dir = (fs::path(ctx.out) / "traces").string();
  evaluation::EvalReport report = evaluation::sweep(variants, sc, ds.eval);

  const auto enc = encoder(c);
  const auto examples = training::prepare(ds.eval, enc);
  for (const auto& v : variants)
    report.interpretability.push_back({v.name, v.sender->a(), v.seed, evaluation::interpretability_score(*v.sender, examples, enc)});

  const fs::path dir = fs::path(ctx.out) / "report";
  evaluation::emit_report(report, dir.string());
  log(ctx) << evaluation::summary_text(report);
  std::string all;
  for (const char* f : {"summary.txt", "fig3_left.csv", "fig3_right.csv", "table1.csv", "table4_categories.csv"})
    all += file_digest((dir / f).string());
  return digest_hex(fnv1a64(all));
}

std::string run_episode(const Context& ctx) {
  snapshot(ctx);
  const auto& c = ctx.config;
  const std::string dir = default_checkpoint(ctx, "episode.checkpoint");
  const LoadedCheckpoint m = load_models(dir);
  const auto ds = load_data(ctx);
  const auto index = static_cast<std::size_t>(c.integer("episode.index"));
  if (index >= ds.eval.size()) {
    throw ConfigError("episode.index " + std::to_string(index) + " outside the eval split of " +
                      std::to_string(ds.eval.size()));
  }
  const auto& rec = ds.eval[index];
  protocol::EpisodeConfig ecfg{protocol::budget_schedule(c.real("episode.budget"),
                                                         static_cast<int>(c.integer("episode.rounds")),
                                                         c.str("episode.policy")),
                               {}};
  ecfg.feedback.max_boxes = static_cast<int>(c.integer("episode.max_boxes"));
  ecfg.feedback.top_answers = static_cast<int>(c.integer("episode.top_answers"));
  protocol::EpisodeTrace t = protocol::run_episode(rec.image, rec.qa, m.sender, m.receiver, ecfg);
  t.a = m.sender.a();
  const fs::path path = fs::path(ctx.out) / "episode.trace";
  write_text(path, protocol::serialize_trace(t));
  const auto& vocab = shapeworld::answer_vocabulary();
  log(ctx) << "question: " << shapeworld::join_tokens(t.question) << "\nprediction: "
           << vocab[static_cast<std::size_t>(t.final_prediction())] << " (truth "
           << vocab[static_cast<std::size_t>(t.answer)] << ")\nrounds: " << t.rounds.size()
           << "\nledger: " << t.ledger.total() << "\ntrace: " << path.string() << "\n";
  return file_digest(path.string());
}

void serve(const Context& ctx) {
  snapshot(ctx);
  const auto& c = ctx.config;
  const std::string dir = default_checkpoint(ctx, "serve.checkpoint");
  std::optional<LoadedCheckpoint> m;
  if (fs::exists(fs::path(dir) / "manifest.txt")) {
    m.emplace(load_models(dir));
  } else {
    log(ctx) << "no checkpoint at " << dir << "; episode creation will answer 503\n";
  }
  std::vector<shapeworld::Record> records;
  if (fs::exists(fs::path(data_dir(ctx)) / "manifest_eval.tsv")) records = load_data(ctx).eval;
  service::EpisodeService svc(m ? &m->sender : nullptr, m ? &m->receiver : nullptr, std::move(records),
                              {service::parse_mode(c.str("serve.mode")), (fs::path(ctx.out) / "served").string()});
  const auto port = static_cast<int>(c.integer("serve.port"));
  log(ctx) << "listening on " << c.str("serve.host") << ":" << port << "\n" << std::flush;
  service::serve(svc, c.str("serve.host"), port);
}

}  // namespace isqa::commands
