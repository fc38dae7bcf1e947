#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "isqa/protocol.hpp"
#include "isqa/training.hpp"

namespace isqa::evaluation {

// Indexed by shapeworld::Category.
struct CategoryAccuracy {
  std::array<std::size_t, 3> correct{};
  std::array<std::size_t, 3> total{};

  std::size_t count() const { return total[0] + total[1] + total[2]; }
  Real overall() const;
  Real of(shapeworld::Category c) const;  // 0 for a category with no episodes
};

CategoryAccuracy accuracy_by_category(std::span<const int> predictions, std::span<const int> truth,
                                      std::span<const shapeworld::Category> categories);
CategoryAccuracy accuracy_by_category(std::span<const protocol::EpisodeTrace> traces);

struct Variant {
  std::string name;
  std::uint64_t seed = 0;
  const sender::SenderModel* sender = nullptr;
  const receiver::ReceiverModel* receiver = nullptr;
};

struct SweepConfig {
  std::vector<Real> budgets = {0.01, 0.03, 0.05, 0.1, 0.2, 0.3, 0.5};
  std::vector<int> rounds = {1, 2};
  std::string policy = "even";
  feedback::FeedbackConfig feedback;
  std::string trace_dir;  // empty: traces are not persisted
};

void validate(const SweepConfig& cfg);

struct Cell {
  std::string variant;
  Real a = 0;
  std::uint64_t seed = 0;
  Real budget = 0;
  int rounds = 1;
  CategoryAccuracy accuracy;
  Real mean_cost = 0;    // mean ledger total per episode
  std::size_t cap = 0;   // largest ledger the cell configuration allows
};

struct Interpretability {
  std::string variant;
  Real a = 0;
  std::uint64_t seed = 0;
  Real distance = 0;
};

struct EvalReport {
  std::vector<Cell> cells;
  std::vector<Interpretability> interpretability;
};

std::size_t cost_cap(const protocol::EpisodeConfig& cfg, int height, int width);
Cell aggregate(const Variant& v, Real budget, int rounds, const protocol::EpisodeConfig& cfg,
               std::span<const protocol::EpisodeTrace> traces);

// Runs every (variant, budget, rounds) cell over the eval records.
EvalReport sweep(std::span<const Variant> variants, const SweepConfig& cfg,
                 std::span<const shapeworld::Record> eval);

std::string cell_trace_path(const std::string& dir, const Cell& c);
std::vector<protocol::EpisodeTrace> load_traces(const std::string& path, int height, int width);

inline constexpr Real kReferenceBudget = 0.3;

// Mean perceptual distance of one-round sketches at the reference budget.
Real interpretability_score(const sender::SenderModel& sender, std::span<const training::Example> eval,
                            const training::PerceptualEncoder& encoder, Real budget = kReferenceBudget);

// summary.txt, fig3_left.csv (one-round accuracy by budget), fig3_right.csv
// (every cell), table1.csv (interpretability), table4_categories.csv.
void emit_report(const EvalReport& report, const std::string& dir);
EvalReport parse_report(const std::string& dir);
std::string summary_text(const EvalReport& report);

}  // namespace isqa::evaluation
