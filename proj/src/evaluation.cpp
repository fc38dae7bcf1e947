#include "isqa/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "isqa/errors.hpp"

namespace isqa::evaluation {

namespace fs = std::filesystem;
using shapeworld::Category;

namespace {

std::string fmt(Real v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string short_fmt(Real v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

Real percent(std::size_t num, std::size_t den) {
  return den == 0 ? 0 : 100.0 * static_cast<Real>(num) / static_cast<Real>(den);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing report table " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

constexpr Category kCategories[] = {Category::yesno, Category::number, Category::other};

}  // namespace

Real CategoryAccuracy::overall() const {
  return percent(correct[0] + correct[1] + correct[2], count());
}

Real CategoryAccuracy::of(Category c) const {
  const auto i = static_cast<std::size_t>(c);
  return percent(correct[i], total[i]);
}

CategoryAccuracy accuracy_by_category(std::span<const int> predictions, std::span<const int> truth,
                                      std::span<const Category> categories) {
  if (predictions.size() != truth.size() || truth.size() != categories.size()) {
    throw DimensionError("accuracy inputs are not aligned: " + std::to_string(predictions.size()) + " predictions, " +
                         std::to_string(truth.size()) + " answers, " + std::to_string(categories.size()) +
                         " categories");
  }
  if (truth.empty()) throw ContractError("accuracy of an empty set");
  CategoryAccuracy acc;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto c = static_cast<std::size_t>(categories[i]);
    ++acc.total[c];
    acc.correct[c] += predictions[i] == truth[i];
  }
  return acc;
}

CategoryAccuracy accuracy_by_category(std::span<const protocol::EpisodeTrace> traces) {
  std::vector<int> pred, truth;
  std::vector<Category> cats;
  for (const auto& t : traces) {
    pred.push_back(t.final_prediction());
    truth.push_back(t.answer);
    cats.push_back(t.category);
  }
  return accuracy_by_category(pred, truth, cats);
}

void validate(const SweepConfig& cfg) {
  if (cfg.budgets.empty()) throw ConfigError("sweep needs at least one budget");
  if (cfg.rounds.empty()) throw ConfigError("sweep needs at least one round count");
  for (Real b : cfg.budgets)
    if (!(b > 0 && b <= 1)) throw ConfigError("sweep budget " + short_fmt(b) + " outside (0, 1]");
  for (int r : cfg.rounds)
    if (r < 1 || r > protocol::kMaxRounds) throw ConfigError("sweep round count " + std::to_string(r) + " outside [1, 3]");
  feedback::validate(cfg.feedback);
}

std::size_t cost_cap(const protocol::EpisodeConfig& cfg, int height, int width) {
  const std::size_t n = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  std::size_t cap = 0;
  for (Real b : cfg.budgets) cap += sender::budget_pixels(b, n);
  return cap + 5 * static_cast<std::size_t>(cfg.feedback.max_boxes) * (cfg.budgets.size() - 1);
}

Cell aggregate(const Variant& v, Real budget, int rounds, const protocol::EpisodeConfig& cfg,
               std::span<const protocol::EpisodeTrace> traces) {
  if (traces.empty()) throw ContractError("cell has no episodes");
  Cell c;
  c.variant = v.name;
  c.a = v.sender->a();
  c.seed = v.seed;
  c.budget = budget;
  c.rounds = rounds;
  c.accuracy = accuracy_by_category(traces);
  Real cost = 0;
  for (const auto& t : traces) cost += static_cast<Real>(t.ledger.total());
  c.mean_cost = cost / static_cast<Real>(traces.size());
  const auto& scfg = v.sender->config();
  c.cap = cost_cap(cfg, scfg.height, scfg.width);
  return c;
}

std::string cell_trace_path(const std::string& dir, const Cell& c) {
  return (fs::path(dir) / (c.variant + "_s" + std::to_string(c.seed)) /
          ("b" + short_fmt(c.budget) + "_r" + std::to_string(c.rounds) + ".traces"))
      .string();
}

std::vector<protocol::EpisodeTrace> load_traces(const std::string& path, int height, int width) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing trace file " + path);
  std::vector<protocol::EpisodeTrace> out;
  std::string line, chunk;
  auto flush = [&] {
    if (!chunk.empty()) out.push_back(protocol::parse_trace(chunk, height, width));
    chunk.clear();
  };
  while (std::getline(in, line)) {
    if (line.rfind("isqa-trace ", 0) == 0) flush();
    chunk += line + "\n";
  }
  flush();
  return out;
}

EvalReport sweep(std::span<const Variant> variants, const SweepConfig& cfg, std::span<const shapeworld::Record> eval) {
  validate(cfg);
  if (eval.empty()) throw ConfigError("eval set is empty");
  EvalReport report;
  for (const auto& v : variants) {
    if (!v.sender || !v.receiver) throw ConfigError("variant '" + v.name + "' has no trained models");
    for (Real budget : cfg.budgets) {
      for (int rounds : cfg.rounds) {
        const protocol::EpisodeConfig ecfg{protocol::budget_schedule(budget, rounds, cfg.policy), cfg.feedback};
        std::vector<protocol::EpisodeTrace> traces;
        traces.reserve(eval.size());
        for (const auto& r : eval) {
          protocol::EpisodeTrace t = protocol::run_episode(r.image, r.qa, *v.sender, *v.receiver, ecfg);
          t.a = v.sender->a();
          traces.push_back(std::move(t));
        }
        Cell cell = aggregate(v, budget, rounds, ecfg, traces);
        if (!cfg.trace_dir.empty()) {
          const fs::path path = cell_trace_path(cfg.trace_dir, cell);
          fs::create_directories(path.parent_path());
          std::string text;
          for (const auto& t : traces) text += protocol::serialize_trace(t);
          write_file(path, text);
        }
        report.cells.push_back(std::move(cell));
      }
    }
  }
  return report;
}

Real interpretability_score(const sender::SenderModel& sender, std::span<const training::Example> eval,
                            const training::PerceptualEncoder& encoder, Real budget) {
  if (eval.empty()) throw ConfigError("eval set is empty");
  Real total = 0;
  for (const auto& ex : eval) {
    protocol::Episode ep(sender, ex.record->image, ex.record->qa, protocol::EpisodeConfig{{budget}, {}});
    total += training::loss_perceptual(ep.send(), ex.reference, encoder);
  }
  return total / static_cast<Real>(eval.size());
}

std::string summary_text(const EvalReport& report) {
  std::ostringstream out;
  out << "cells " << report.cells.size() << "\n";
  for (const auto& c : report.cells) {
    char line[256];
    std::snprintf(line, sizeof line,
                  "%s seed %llu budget %g rounds %d: overall %.2f yesno %.2f number %.2f other %.2f cost %.1f/%zu n %zu\n",
                  c.variant.c_str(), static_cast<unsigned long long>(c.seed), c.budget, c.rounds,
                  c.accuracy.overall(), c.accuracy.of(Category::yesno), c.accuracy.of(Category::number),
                  c.accuracy.of(Category::other), c.mean_cost, c.cap, c.accuracy.count());
    out << line;
  }
  for (const auto& i : report.interpretability) {
    char line[160];
    std::snprintf(line, sizeof line, "distance %s seed %llu a %g: %.6f\n", i.variant.c_str(),
                  static_cast<unsigned long long>(i.seed), i.a, i.distance);
    out << line;
  }
  return out.str();
}

void emit_report(const EvalReport& report, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create report directory " + dir + ": " + ec.message());

  std::string left = "variant,a,seed,budget,accuracy,mean_cost,cap,episodes\n";
  std::string right =
      "variant,a,seed,budget,rounds,episodes,overall,yesno,number,other,"
      "yesno_correct,yesno_total,number_correct,number_total,other_correct,other_total,mean_cost,cap\n";
  std::string cats = "variant,a,seed,budget,rounds,overall,other,yesno,number\n";
  for (const auto& c : report.cells) {
    const std::string key = c.variant + "," + fmt(c.a) + "," + std::to_string(c.seed) + "," + fmt(c.budget);
    const auto& acc = c.accuracy;
    if (c.rounds == 1) {
      left += key + "," + fmt(acc.overall()) + "," + fmt(c.mean_cost) + "," + std::to_string(c.cap) + "," +
              std::to_string(acc.count()) + "\n";
    }
    right += key + "," + std::to_string(c.rounds) + "," + std::to_string(acc.count()) + "," + fmt(acc.overall());
    for (Category k : kCategories) right += "," + fmt(acc.of(k));
    for (std::size_t k = 0; k < 3; ++k) right += "," + std::to_string(acc.correct[k]) + "," + std::to_string(acc.total[k]);
    right += "," + fmt(c.mean_cost) + "," + std::to_string(c.cap) + "\n";
    cats += key + "," + std::to_string(c.rounds) + "," + fmt(acc.overall()) + "," + fmt(acc.of(Category::other)) + "," +
            fmt(acc.of(Category::yesno)) + "," + fmt(acc.of(Category::number)) + "\n";
  }
  std::string table1 = "variant,a,seed,distance\n";
  for (const auto& i : report.interpretability)
    table1 += i.variant + "," + fmt(i.a) + "," + std::to_string(i.seed) + "," + fmt(i.distance) + "\n";

  const fs::path d(dir);
  write_file(d / "summary.txt", summary_text(report));
  write_file(d / "fig3_left.csv", left);
  write_file(d / "fig3_right.csv", right);
  write_file(d / "table1.csv", table1);
  write_file(d / "table4_categories.csv", cats);
}

EvalReport parse_report(const std::string& dir) {
  EvalReport report;
  try {
    for (const auto& row : read_csv(fs::path(dir) / "fig3_right.csv")) {
      if (row.size() != 18) throw IoError("fig3_right.csv row has " + std::to_string(row.size()) + " fields");
      Cell c;
      c.variant = row[0];
      c.a = std::stod(row[1]);
      c.seed = std::stoull(row[2]);
      c.budget = std::stod(row[3]);
      c.rounds = std::stoi(row[4]);
      for (std::size_t k = 0; k < 3; ++k) {
        c.accuracy.correct[k] = std::stoull(row[10 + 2 * k]);
        c.accuracy.total[k] = std::stoull(row[11 + 2 * k]);
      }
      c.mean_cost = std::stod(row[16]);
      c.cap = std::stoull(row[17]);
      report.cells.push_back(std::move(c));
    }
    for (const auto& row : read_csv(fs::path(dir) / "table1.csv")) {
      if (row.size() != 4) throw IoError("table1.csv row has " + std::to_string(row.size()) + " fields");
      report.interpretability.push_back({row[0], std::stod(row[1]), std::stoull(row[2]), std::stod(row[3])});
    }
  } catch (const std::logic_error& e) {
    throw IoError(std::string("malformed report table: ") + e.what());
  }
  return report;
}

}  // namespace isqa::evaluation
