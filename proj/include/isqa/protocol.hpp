#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "isqa/feedback.hpp"
#include "isqa/messages.hpp"
#include "isqa/receiver.hpp"
#include "isqa/sender.hpp"
#include "isqa/shapeworld.hpp"

namespace isqa::protocol {

inline constexpr int kMaxRounds = 3;

struct EpisodeConfig {
  std::vector<Real> budgets = {0.3};  // per-round fractions of N
  feedback::FeedbackConfig feedback;
};

void validate(const EpisodeConfig& cfg);

// "even" splits the total equally; "front" gives half to round one and splits
// the rest. The last round absorbs rounding so the fractions sum to `total`.
std::vector<Real> budget_schedule(Real total, int rounds, const std::string& policy);

struct LedgerEntry {
  std::size_t pixels = 0;
  std::size_t boxes = 0;
  bool operator==(const LedgerEntry&) const = default;
};

// Running drawing complexity: every pixel costs 1, every feedback box 5.
class BudgetLedger {
public:
  void update(long long pixels, long long boxes);
  std::size_t total() const noexcept { return total_; }
  std::size_t recompute() const;
  const std::vector<LedgerEntry>& entries() const noexcept { return entries_; }

private:
  std::vector<LedgerEntry> entries_;
  std::size_t total_ = 0;
};

struct RoundRecord {
  Real budget = 0;
  std::size_t pixels = 0;
  std::vector<std::uint8_t> sketch_wire;
  Sketch accumulated;            // receiver-side overlay after this round
  std::vector<Real> scores;      // empty when no machine receiver answered
  int prediction = -1;
  std::optional<FeedbackSketch> feedback;  // present only when sent
};

struct EpisodeTrace {
  std::vector<std::string> question;
  int answer = -1;
  shapeworld::Category category = shapeworld::Category::other;
  Real a = 0;
  std::vector<Real> budgets;
  std::vector<RoundRecord> rounds;
  BudgetLedger ledger;
  double seconds = 0;  // wall time, not serialized

  int final_prediction() const { return rounds.empty() ? -1 : rounds.back().prediction; }
  bool correct() const { return final_prediction() == answer; }
};

// One episode driven step by step. The machine loop is send() then
// respond(receiver) until finished(); a human receiver instead calls
// send(), accept_feedback() and finally submit_answer().
class Episode {
public:
  Episode(const sender::SenderModel& sender, Tensor image, shapeworld::QAPair qa, EpisodeConfig cfg);

  enum class Phase { awaiting_send, awaiting_receiver, finished };
  Phase phase() const noexcept { return phase_; }
  bool finished() const noexcept { return phase_ == Phase::finished; }
  int rounds_done() const noexcept { return static_cast<int>(trace_.rounds.size()); }
  int rounds_total() const noexcept { return static_cast<int>(cfg_.budgets.size()); }
  bool rounds_remain() const noexcept { return rounds_done() < rounds_total(); }

  // Sender turn: draws S_i and returns it as the receiver sees it.
  const Sketch& send();
  const Sketch& last_sketch() const noexcept { return last_sketch_; }
  const Sketch& receiver_view() const noexcept { return receiver_view_; }

  // Machine receiver turn: answers and, if rounds remain, attributes feedback.
  void respond(const receiver::ReceiverModel& receiver);
  // External receiver turn; an empty feedback ends the episode.
  void accept_feedback(const FeedbackSketch& feedback);
  void submit_answer(int answer);

  const EpisodeTrace& trace() const noexcept { return trace_; }
  EpisodeTrace take_trace() { return std::move(trace_); }

private:
  void after_feedback(const std::optional<FeedbackSketch>& fb);

  const sender::SenderModel& sender_;
  Tensor image_;
  EpisodeConfig cfg_;
  Tensor fusion_;
  sender::SketchState state_;
  Sketch receiver_view_;
  Sketch last_sketch_;
  std::optional<FeedbackSketch> pending_feedback_;
  Real cumulative_ = 0;
  Phase phase_ = Phase::awaiting_send;
  EpisodeTrace trace_;
};

EpisodeTrace run_episode(const Tensor& image, const shapeworld::QAPair& qa, const sender::SenderModel& sender,
                         const receiver::ReceiverModel& receiver, const EpisodeConfig& cfg);

// Text record with a fixed field order; sketches and feedback are embedded as
// base-16 wire payloads and reals in round-trip precision.
std::string serialize_trace(const EpisodeTrace& trace);
EpisodeTrace parse_trace(const std::string& text, int height, int width);

// Re-runs the receiver on the recorded sketches; returns per-round scores.
std::vector<std::vector<Real>> replay_scores(const EpisodeTrace& trace, const receiver::ReceiverModel& receiver);

}  // namespace isqa::protocol
