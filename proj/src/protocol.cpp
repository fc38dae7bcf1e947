#include "isqa/protocol.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "isqa/errors.hpp"

namespace isqa::protocol {

namespace {

std::string real_text(Real v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join_reals(const std::vector<Real>& v) {
  if (v.empty()) return "-";
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + real_text(v[i]);
  return out;
}

std::vector<Real> split_reals(const std::string& s) {
  std::vector<Real> out;
  if (s == "-") return out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(std::stod(item));
  return out;
}

void check_feedback(const FeedbackSketch& fb, int height, int width) {
  if (fb.height != height || fb.width != width) throw ContractError("feedback canvas does not match the episode");
  for (const auto& b : fb.boxes) {
    if (b.x1 < 0 || b.y1 < 0 || b.x2 > width || b.y2 > height || b.x1 >= b.x2 || b.y1 >= b.y2) {
      throw ContractError("feedback box (" + std::to_string(b.x1) + "," + std::to_string(b.y1) + "," +
                          std::to_string(b.x2) + "," + std::to_string(b.y2) + ") is empty or leaves the canvas");
    }
    if (!(b.weight >= 0) || !std::isfinite(b.weight)) throw ContractError("feedback weights must be finite and >= 0");
  }
}

}  // namespace

EpisodeTrace parse_trace_fields(const std::string& text, int height, int width);

void validate(const EpisodeConfig& cfg) {
  const auto r = cfg.budgets.size();
  if (r < 1 || r > static_cast<std::size_t>(kMaxRounds)) {
    throw ConfigError("rounds must be between 1 and " + std::to_string(kMaxRounds) + ", got " + std::to_string(r));
  }
  Real total = 0;
  for (Real b : cfg.budgets) {
    if (!(b >= 0) || !std::isfinite(b)) throw ConfigError("round budgets must be finite and >= 0");
    total += b;
  }
  if (total > 1 + 1e-12) throw ConfigError("round budgets sum to " + real_text(total) + ", more than the canvas");
  feedback::validate(cfg.feedback);
}

std::vector<Real> budget_schedule(Real total, int rounds, const std::string& policy) {
  if (!(total > 0 && total <= 1)) throw ConfigError("total budget fraction must lie in (0,1], got " + real_text(total));
  if (rounds < 1) throw ConfigError("rounds must be >= 1");
  std::vector<Real> b(static_cast<std::size_t>(rounds));
  if (policy == "even") {
    for (auto& v : b) v = total / rounds;
  } else if (policy == "front") {
    if (rounds == 1) {
      b[0] = total;
    } else {
      b[0] = total / 2;
      for (int i = 1; i < rounds; ++i) b[static_cast<std::size_t>(i)] = (total / 2) / (rounds - 1);
    }
  } else {
    throw ConfigError("unknown budget policy '" + policy + "' (expected even or front)");
  }
  const Real head = std::accumulate(b.begin(), b.end() - 1, Real{0});
  b.back() = total - head;
  return b;
}

void BudgetLedger::update(long long pixels, long long boxes) {
  if (pixels < 0 || boxes < 0) {
    throw ContractError("ledger counts must be nonnegative, got p=" + std::to_string(pixels) +
                        " h=" + std::to_string(boxes));
  }
  entries_.push_back({static_cast<std::size_t>(pixels), static_cast<std::size_t>(boxes)});
  total_ += static_cast<std::size_t>(pixels) + 5 * static_cast<std::size_t>(boxes);
}

std::size_t BudgetLedger::recompute() const {
  std::size_t b = 0;
  for (const auto& e : entries_) b += e.pixels + 5 * e.boxes;
  return b;
}

Episode::Episode(const sender::SenderModel& sender, Tensor image, shapeworld::QAPair qa, EpisodeConfig cfg)
    : sender_(sender),
      image_(std::move(image)),
      cfg_(std::move(cfg)),
      state_(sender.config().height, sender.config().width),
      receiver_view_(Sketch::blank(sender.config().height, sender.config().width)) {
  validate(cfg_);
  const auto& sc = sender_.config();
  if (image_.rank() != 3 || image_.dim(1) != sc.height || image_.dim(2) != sc.width) {
    throw ConfigError("image " + image_.shape_string() + " does not match sender canvas " +
                      std::to_string(sc.height) + "x" + std::to_string(sc.width));
  }
  fusion_ = sender_.fusion(image_);
  trace_.question = std::move(qa.question);
  trace_.answer = qa.answer;
  trace_.category = qa.category;
  trace_.a = sender_.a();
  trace_.budgets = cfg_.budgets;
}

const Sketch& Episode::send() {
  if (phase_ != Phase::awaiting_send) throw ProtocolError("sender is not expected to draw now");
  const auto& sc = sender_.config();
  const Real b = cfg_.budgets[trace_.rounds.size()];
  cumulative_ += b;
  const Sketch draft = cumulative_ > 0 ? sender_.draft(fusion_, std::min<Real>(cumulative_, 1))
                                       : Sketch::blank(sc.height, sc.width);
  const FeedbackSketch* fb = pending_feedback_ ? &*pending_feedback_ : nullptr;
  sender::Selection sel = sender::select_pixels(draft, fb, b, state_);
  const std::size_t cap = sender::budget_pixels(b, draft.size());
  if (sel.pixels > cap) {
    throw ProtocolError("round " + std::to_string(trace_.rounds.size() + 1) + " sent " + std::to_string(sel.pixels) +
                        " pixels, budget allows " + std::to_string(cap));
  }
  RoundRecord rec;
  rec.budget = b;
  rec.pixels = sel.pixels;
  rec.sketch_wire = sketch_to_wire(sel.sketch);
  last_sketch_ = sketch_from_wire(rec.sketch_wire);
  receiver_view_ = receiver::overlay_sketches(std::vector<Sketch>{receiver_view_, last_sketch_});
  rec.accumulated = receiver_view_;
  trace_.rounds.push_back(std::move(rec));
  phase_ = Phase::awaiting_receiver;
  return last_sketch_;
}

void Episode::respond(const receiver::ReceiverModel& receiver) {
  if (phase_ != Phase::awaiting_receiver) throw ProtocolError("receiver is not expected to respond now");
  const bool want_feedback = rounds_remain();
  ad::Graph g;
  BoundParams p(g, receiver.params(), false);
  const auto tokens = receiver::tokenize(trace_.question);
  receiver::Forward fw = receiver.forward(g, p, tokens, receiver_view_, want_feedback);
  RoundRecord& rec = trace_.rounds.back();
  rec.scores = g.value(fw.scores).storage();
  rec.prediction = receiver::predict(rec.scores);
  std::optional<FeedbackSketch> fb;
  if (want_feedback) {
    const auto& sc = sender_.config();
    fb = feedback::attribute(g, fw, cfg_.feedback, sc.height, sc.width).sketch;
  }
  after_feedback(fb);
}

void Episode::accept_feedback(const FeedbackSketch& fb) {
  if (phase_ != Phase::awaiting_receiver) throw ProtocolError("feedback is not expected now");
  if (!rounds_remain()) throw ProtocolError("no rounds remain for feedback; submit an answer");
  const auto& sc = sender_.config();
  check_feedback(fb, sc.height, sc.width);
  if (fb.count() > static_cast<std::size_t>(cfg_.feedback.max_boxes)) {
    throw ContractError("feedback has " + std::to_string(fb.count()) + " boxes, limit is " +
                        std::to_string(cfg_.feedback.max_boxes));
  }
  after_feedback(fb);
}

void Episode::submit_answer(int answer) {
  if (phase_ != Phase::awaiting_receiver) throw ProtocolError("an answer is not expected now");
  const int n = static_cast<int>(shapeworld::answer_vocabulary().size());
  if (answer < 0 || answer >= n) throw ContractError("answer index " + std::to_string(answer) + " out of range");
  trace_.rounds.back().prediction = answer;
  after_feedback(std::nullopt);
}

void Episode::after_feedback(const std::optional<FeedbackSketch>& fb) {
  RoundRecord& rec = trace_.rounds.back();
  if (fb) rec.feedback = feedback_from_wire(feedback_to_wire(*fb), fb->height, fb->width);
  trace_.ledger.update(static_cast<long long>(rec.pixels), fb ? static_cast<long long>(fb->count()) : 0);
  if (!fb || fb->empty() || !rounds_remain()) {
    pending_feedback_.reset();
    phase_ = Phase::finished;
    return;
  }
  pending_feedback_ = rec.feedback;
  phase_ = Phase::awaiting_send;
}

EpisodeTrace run_episode(const Tensor& image, const shapeworld::QAPair& qa, const sender::SenderModel& sender,
                         const receiver::ReceiverModel& receiver, const EpisodeConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  Episode ep(sender, image, qa, cfg);
  while (!ep.finished()) {
    ep.send();
    ep.respond(receiver);
  }
  EpisodeTrace t = ep.take_trace();
  t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return t;
}

std::string serialize_trace(const EpisodeTrace& t) {
  std::ostringstream out;
  out << "isqa-trace 1\n";
  out << "question " << shapeworld::join_tokens(t.question) << "\n";
  out << "answer " << t.answer << "\n";
  out << "category " << shapeworld::to_string(t.category) << "\n";
  out << "a " << real_text(t.a) << "\n";
  out << "budgets " << join_reals(t.budgets) << "\n";
  out << "rounds " << t.rounds.size() << "\n";
  for (std::size_t i = 0; i < t.rounds.size(); ++i) {
    const RoundRecord& r = t.rounds[i];
    out << "round " << i + 1 << "\n";
    out << "budget " << real_text(r.budget) << "\n";
    out << "pixels " << r.pixels << "\n";
    out << "sketch " << to_hex(r.sketch_wire) << "\n";
    out << "scores " << join_reals(r.scores) << "\n";
    out << "prediction " << r.prediction << "\n";
    if (r.feedback) {
      out << "boxes " << r.feedback->count() << "\n";
      out << "feedback " << to_hex(feedback_to_wire(*r.feedback)) << "\n";
    } else {
      out << "boxes 0\nfeedback -\n";
    }
  }
  out << "ledger";
  for (const auto& e : t.ledger.entries()) out << " " << e.pixels << ":" << e.boxes;
  out << "\ntotal " << t.ledger.total() << "\n";
  return out.str();
}

EpisodeTrace parse_trace_fields(const std::string& text, int height, int width) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  auto next = [&](const std::string& key) {
    if (!std::getline(in, line)) throw IoError("trace ended early, expected '" + key + "'");
    ++line_no;
    const std::string prefix = key + " ";
    if (line.rfind(prefix, 0) != 0 && line != key) {
      throw IoError("trace line " + std::to_string(line_no) + ": expected '" + key + "', got '" + line + "'");
    }
    return line.size() > key.size() ? line.substr(prefix.size()) : std::string();
  };
  if (next("isqa-trace") != "1") throw IoError("unsupported trace version");
  EpisodeTrace t;
  t.question = shapeworld::split_tokens(next("question"));
  t.answer = std::stoi(next("answer"));
  t.category = shapeworld::parse_category(next("category"));
  t.a = std::stod(next("a"));
  t.budgets = split_reals(next("budgets"));
  const int rounds = std::stoi(next("rounds"));
  Sketch view = Sketch::blank(height, width);
  for (int i = 0; i < rounds; ++i) {
    if (std::stoi(next("round")) != i + 1) throw IoError("trace rounds out of order");
    RoundRecord r;
    r.budget = std::stod(next("budget"));
    r.pixels = std::stoul(next("pixels"));
    r.sketch_wire = from_hex(next("sketch"));
    const Sketch s = sketch_from_wire(r.sketch_wire);
    if (s.height != height || s.width != width) throw IoError("trace sketch canvas mismatch");
    view = receiver::overlay_sketches(std::vector<Sketch>{view, s});
    r.accumulated = view;
    r.scores = split_reals(next("scores"));
    r.prediction = std::stoi(next("prediction"));
    const std::size_t boxes = std::stoul(next("boxes"));
    const std::string fb = next("feedback");
    if (fb != "-") {
      r.feedback = feedback_from_wire(from_hex(fb), height, width);
      if (r.feedback->count() != boxes) throw IoError("trace feedback count mismatch");
    }
    t.rounds.push_back(std::move(r));
  }
  std::istringstream ledger(next("ledger"));
  std::string entry;
  while (ledger >> entry) {
    const auto colon = entry.find(':');
    if (colon == std::string::npos) throw IoError("bad ledger entry '" + entry + "'");
    t.ledger.update(std::stoll(entry.substr(0, colon)), std::stoll(entry.substr(colon + 1)));
  }
  if (std::stoul(next("total")) != t.ledger.total()) throw IoError("trace ledger total does not re-sum");
  return t;
}

EpisodeTrace parse_trace(const std::string& text, int height, int width) {
  try {
    return parse_trace_fields(text, height, width);
  } catch (const std::logic_error& e) {
    throw IoError(std::string("malformed trace: ") + e.what());
  }
}

std::vector<std::vector<Real>> replay_scores(const EpisodeTrace& trace, const receiver::ReceiverModel& receiver) {
  std::vector<std::vector<Real>> out;
  const auto tokens = receiver::tokenize(trace.question);
  for (const auto& r : trace.rounds) out.push_back(receiver.scores(tokens, r.accumulated));
  return out;
}

}  // namespace isqa::protocol
