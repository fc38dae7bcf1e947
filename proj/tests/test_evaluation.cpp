#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "isqa/errors.hpp"
#include "isqa/evaluation.hpp"

using namespace isqa;
using namespace isqa::evaluation;
using shapeworld::Category;

namespace {

struct Models {
  sender::SenderModel prageo{{}, sender::init_sender_params({}, 11), 0.5};
  sender::SenderModel geometric{{}, sender::init_sender_params({}, 12), 1.0};
  receiver::ReceiverModel receiver{{}, receiver::init_receiver_params({}, 13)};
};

const Models& models() {
  static const Models m;
  return m;
}

const shapeworld::Dataset& data() {
  static const shapeworld::Dataset ds = shapeworld::build_dataset(5, 1, 24);
  return ds;
}

std::string read(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST(AccuracyByCategory, AllCorrectAndAlternating) {
  const std::vector<int> truth{1, 2, 3, 4, 5, 6};
  const std::vector<Category> cats{Category::yesno, Category::number, Category::other,
                                   Category::yesno, Category::number, Category::other};
  const auto all = accuracy_by_category(truth, truth, cats);
  EXPECT_EQ(all.overall(), 100.0);
  for (Category c : {Category::yesno, Category::number, Category::other}) EXPECT_EQ(all.of(c), 100.0);

  const std::vector<int> alt{1, 0, 3, 0, 5, 0};
  EXPECT_EQ(accuracy_by_category(alt, truth, cats).overall(), 50.0);
  EXPECT_THROW(accuracy_by_category({}, {}, {}), ContractError);
  EXPECT_THROW(accuracy_by_category(alt, std::vector<int>{1}, cats), DimensionError);
}

TEST(AccuracyByCategory, CategoriesRecombineToOverall) {
  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform_int(0, 60));
    std::vector<int> pred(n), truth(n);
    std::vector<Category> cats(n);
    for (std::size_t i = 0; i < n; ++i) {
      truth[i] = static_cast<int>(rng.uniform_int(0, 3));
      pred[i] = static_cast<int>(rng.uniform_int(0, 3));
      cats[i] = static_cast<Category>(rng.uniform_int(0, 2));
    }
    const auto acc = accuracy_by_category(pred, truth, cats);
    Real weighted = 0;
    for (Category c : {Category::yesno, Category::number, Category::other})
      weighted += acc.of(c) * static_cast<Real>(acc.total[static_cast<std::size_t>(c)]);
    EXPECT_NEAR(weighted / static_cast<Real>(n), acc.overall(), 1e-9);
  }
}

TEST(Sweep, CellsAreHonestAndReaggregateFromTraces) {
  const auto dir = scratch("isqa_sweep_test");
  const std::vector<Variant> variants{{"prageo", 0, &models().prageo, &models().receiver},
                                      {"geometric", 0, &models().geometric, &models().receiver}};
  SweepConfig cfg;
  cfg.budgets = {0.05, 0.3};
  cfg.rounds = {1, 2};
  cfg.trace_dir = dir.string();
  const EvalReport report = sweep(variants, cfg, data().eval);
  ASSERT_EQ(report.cells.size(), 2u * 2u * 2u);
  for (const auto& c : report.cells) {
    EXPECT_EQ(c.accuracy.count(), data().eval.size());
    EXPECT_LE(c.mean_cost, static_cast<Real>(c.cap));
    const auto traces = load_traces(cell_trace_path(dir.string(), c), 64, 64);
    ASSERT_EQ(traces.size(), data().eval.size());
    const protocol::EpisodeConfig ecfg{protocol::budget_schedule(c.budget, c.rounds, cfg.policy), cfg.feedback};
    const Variant& v = c.variant == "prageo" ? variants[0] : variants[1];
    const Cell again = aggregate(v, c.budget, c.rounds, ecfg, traces);
    EXPECT_EQ(again.accuracy.correct, c.accuracy.correct);
    EXPECT_EQ(again.accuracy.total, c.accuracy.total);
    EXPECT_EQ(again.mean_cost, c.mean_cost);
    if (c.rounds == 1) {
      for (const auto& t : traces)
        for (const auto& e : t.ledger.entries()) EXPECT_EQ(e.boxes, 0u);
    }
  }
  std::filesystem::remove_all(dir);
}

TEST(Sweep, DeterministicAndValidated) {
  const std::vector<Variant> variants{{"prageo", 3, &models().prageo, &models().receiver}};
  SweepConfig cfg;
  cfg.budgets = {0.1};
  cfg.rounds = {2};
  const auto a = sweep(variants, cfg, data().eval), b = sweep(variants, cfg, data().eval);
  EXPECT_EQ(summary_text(a), summary_text(b));
  cfg.rounds = {4};
  EXPECT_THROW(sweep(variants, cfg, data().eval), ConfigError);
  cfg.rounds = {1};
  cfg.budgets = {1.5};
  EXPECT_THROW(sweep(variants, cfg, data().eval), ConfigError);
  const std::vector<Variant> missing{{"none", 0, nullptr, nullptr}};
  EXPECT_THROW(sweep(missing, SweepConfig{}, data().eval), ConfigError);
}

TEST(Interpretability, DeterministicAndBoundedBelow) {
  const training::PerceptualEncoder enc;
  const auto ex = training::prepare(data().eval, enc);
  const Real s = interpretability_score(models().geometric, ex, enc);
  EXPECT_EQ(s, interpretability_score(models().geometric, ex, enc));
  EXPECT_GE(s, -1.0 - 1e-12);
  Real self = 0;
  for (const auto& e : ex) self += training::loss_perceptual(e.reference, e.reference, enc);
  EXPECT_NEAR(self / static_cast<Real>(ex.size()), -1.0, 1e-12);
  EXPECT_THROW(interpretability_score(models().geometric, {}, enc), ConfigError);
}

TEST(EmitReport, RoundTripAndStableColumns) {
  const auto dir = scratch("isqa_report_test");
  EvalReport r;
  Cell c;
  c.variant = "pragmatic";
  c.a = 0;
  c.seed = 2;
  c.budget = 0.1;
  c.rounds = 2;
  c.accuracy.correct = {3, 1, 2};
  c.accuracy.total = {7, 5, 3};
  c.mean_cost = 409.0 + 1.0 / 3;
  c.cap = 414;
  r.cells.push_back(c);
  c.rounds = 1;
  c.cap = 409;
  r.cells.push_back(c);
  r.interpretability.push_back({"pragmatic", 0, 2, 0.1 + 0.2});
  emit_report(r, dir.string());
  for (const char* f : {"summary.txt", "fig3_left.csv", "fig3_right.csv", "table1.csv", "table4_categories.csv"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;

  const EvalReport back = parse_report(dir.string());
  ASSERT_EQ(back.cells.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back.cells[i].variant, r.cells[i].variant);
    EXPECT_EQ(back.cells[i].budget, r.cells[i].budget);
    EXPECT_EQ(back.cells[i].rounds, r.cells[i].rounds);
    EXPECT_EQ(back.cells[i].accuracy.correct, r.cells[i].accuracy.correct);
    EXPECT_EQ(back.cells[i].accuracy.total, r.cells[i].accuracy.total);
    EXPECT_EQ(back.cells[i].mean_cost, r.cells[i].mean_cost);
    EXPECT_EQ(back.cells[i].cap, r.cells[i].cap);
  }
  ASSERT_EQ(back.interpretability.size(), 1u);
  EXPECT_EQ(back.interpretability[0].distance, 0.1 + 0.2);

  const std::string first = read(dir / "fig3_right.csv");
  EXPECT_EQ(first.substr(0, first.find('\n')),
            "variant,a,seed,budget,rounds,episodes,overall,yesno,number,other,yesno_correct,yesno_total,"
            "number_correct,number_total,other_correct,other_total,mean_cost,cap");
  emit_report(back, dir.string());
  EXPECT_EQ(read(dir / "fig3_right.csv"), first);
  const std::string left = read(dir / "fig3_left.csv");
  EXPECT_EQ(std::count(left.begin(), left.end(), '\n'), 2);
  std::filesystem::remove_all(dir);
  EXPECT_THROW(parse_report(dir.string()), IoError);
}
