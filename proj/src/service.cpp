#include "isqa/service.hpp"

#include <filesystem>
#include <fstream>
#include <regex>

#include <httplib.h>
#include <json.hpp>

#include "isqa/errors.hpp"

namespace isqa::service {

using nlohmann::json;
using protocol::Episode;

namespace {

Response reply(int status, const json& body) { return {status, body.dump()}; }

Response error(int status, const std::string& kind, const std::string& message) {
  return reply(status, json{{"error", kind}, {"message", message}});
}

json pixel_list(const Sketch& s) {
  json out = json::array();
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x)
      if (s.at(y, x) < 1) out.push_back(json::array({y, x, s.at(y, x)}));
  return out;
}

json box_list(const FeedbackSketch& f) {
  json out = json::array();
  for (const Box& b : f.boxes) out.push_back({{"x1", b.x1}, {"y1", b.y1}, {"x2", b.x2}, {"y2", b.y2}, {"weight", b.weight}});
  return out;
}

std::string phase_name(Episode::Phase p) {
  switch (p) {
    case Episode::Phase::awaiting_send: return "awaiting_sketch";
    case Episode::Phase::awaiting_receiver: return "awaiting_receiver";
    case Episode::Phase::finished: return "finished";
  }
  return "unknown";
}

// Bad body shape is the caller's problem: 400 on creation, 422 elsewhere.
json parse_body(const std::string& body) {
  if (body.empty()) return json::object();
  json j = json::parse(body);
  if (!j.is_object()) throw json::type_error::create(302, "request body must be an object", nullptr);
  return j;
}

}  // namespace

Mode parse_mode(const std::string& s) {
  if (s == "human") return Mode::human;
  if (s == "machine") return Mode::machine;
  throw ConfigError("unknown mode '" + s + "' (expected human or machine)");
}

std::string to_string(Mode m) { return m == Mode::human ? "human" : "machine"; }

struct EpisodeService::Session {
  std::string id;
  Mode mode = Mode::human;
  shapeworld::Record record;
  protocol::EpisodeConfig config;
  std::unique_ptr<Episode> episode;
  bool persisted = false;
  std::mutex mutex;

  // Every pixel sent plus five per received box, from the rounds themselves.
  std::size_t ledger() const {
    std::size_t b = 0;
    for (const auto& r : episode->trace().rounds) b += r.pixels + 5 * (r.feedback ? r.feedback->count() : 0);
    return b;
  }
  std::size_t cap(std::size_t round) const {
    const auto& sc = record.image;
    return sender::budget_pixels(config.budgets[round], static_cast<std::size_t>(sc.dim(1)) * sc.dim(2));
  }
};

EpisodeService::EpisodeService(const sender::SenderModel* sender, const receiver::ReceiverModel* receiver,
                               std::vector<shapeworld::Record> records, ServiceOptions options)
    : sender_(sender), receiver_(receiver), records_(std::move(records)), options_(std::move(options)) {}

EpisodeService::~EpisodeService() = default;

std::size_t EpisodeService::session_count() const {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

std::shared_ptr<EpisodeService::Session> EpisodeService::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

Response EpisodeService::handle(const std::string& method, const std::string& path, const std::string& body) {
  static const std::regex session_route(R"(^/episodes/([A-Za-z0-9_-]+)(/(sketch|feedback|answer|advance))?$)");
  try {
    if (path == "/episodes") {
      if (method != "POST") return error(405, "method", "use POST to create an episode");
      return create(body);
    }
    std::smatch m;
    if (!std::regex_match(path, m, session_route)) return error(404, "route", "no route for " + path);
    auto s = find(m[1].str());
    if (!s) return error(404, "session", "unknown episode " + m[1].str());
    const std::string action = m[3].str();
    std::lock_guard lock(s->mutex);
    if (action.empty() && method == "GET") return state(*s);
    if (action == "sketch" && method == "GET") return sketch(*s);
    if (action == "feedback" && method == "POST") return feedback(*s, body);
    if (action == "answer" && method == "POST") return answer(*s, body);
    if (action == "advance" && method == "POST") return advance(*s);
    return error(405, "method", method + " not allowed on " + path);
  } catch (const ProtocolError& e) {
    return error(409, "protocol", e.what());
  } catch (const std::exception& e) {
    return error(500, "internal", e.what());
  }
}

Response EpisodeService::create(const std::string& body) {
  json req;
  protocol::EpisodeConfig cfg;
  Mode mode = options_.mode;
  shapeworld::Record rec;
  try {
    req = parse_body(body);
    if (req.contains("budgets")) {
      cfg.budgets = req.at("budgets").get<std::vector<Real>>();
    } else if (req.contains("budget")) {
      cfg.budgets = protocol::budget_schedule(req.at("budget").get<Real>(), req.value("rounds", 1),
                                              req.value("policy", std::string("even")));
    }
    cfg.feedback.max_boxes = req.value("max_boxes", cfg.feedback.max_boxes);
    cfg.feedback.top_answers = req.value("top_answers", cfg.feedback.top_answers);
    protocol::validate(cfg);
    if (req.contains("mode")) mode = parse_mode(req.at("mode").get<std::string>());
    if (req.contains("seed")) {
      const auto seed = req.at("seed").get<std::uint64_t>();
      auto gen = shapeworld::generate_scene(seed, {});
      rec = {-1, seed, gen.scene, gen.image, shapeworld::generate_question(gen.scene, derive_seed(seed, 1))};
    } else {
      const long long index = req.value("index", 0LL);
      if (index < 0 || index >= static_cast<long long>(records_.size())) {
        return error(400, "config", "dataset index " + std::to_string(index) + " outside [0, " +
                                        std::to_string(records_.size()) + ")");
      }
      rec = records_[static_cast<std::size_t>(index)];
    }
  } catch (const json::exception& e) {
    return error(400, "config", e.what());
  } catch (const Error& e) {
    return error(400, "config", e.what());
  }
  if (!sender_) return error(503, "unavailable", "no sender checkpoint loaded");
  if (mode == Mode::machine && !receiver_) return error(503, "unavailable", "no receiver checkpoint loaded");

  auto s = std::make_shared<Session>();
  s->mode = mode;
  s->config = cfg;
  s->record = std::move(rec);
  s->episode = std::make_unique<Episode>(*sender_, s->record.image, s->record.qa, cfg);
  {
    std::lock_guard lock(mutex_);
    s->id = "e" + std::to_string(next_id_++);
    sessions_[s->id] = s;
  }
  json caps = json::array();
  for (std::size_t i = 0; i < cfg.budgets.size(); ++i) caps.push_back(s->cap(i));
  return reply(201, json{{"id", s->id},
                         {"mode", to_string(mode)},
                         {"question", shapeworld::join_tokens(s->record.qa.question)},
                         {"height", s->record.image.dim(1)},
                         {"width", s->record.image.dim(2)},
                         {"budgets", cfg.budgets},
                         {"pixel_caps", caps},
                         {"max_boxes", cfg.feedback.max_boxes},
                         {"box_cost", 5}});
}

Response EpisodeService::sketch(Session& s) {
  Episode& ep = *s.episode;
  if (ep.phase() == Episode::Phase::awaiting_send) ep.send();
  if (ep.rounds_done() == 0) return error(409, "protocol", "episode closed before any sketch was drawn");
  const std::size_t round = static_cast<std::size_t>(ep.rounds_done() - 1);
  const auto& rec = ep.trace().rounds[round];
  std::size_t sent = 0, allowed = 0;
  for (std::size_t i = 0; i < s.config.budgets.size(); ++i) allowed += s.cap(i);
  for (const auto& r : ep.trace().rounds) sent += r.pixels;
  return reply(200, json{{"id", s.id},
                         {"round", round + 1},
                         {"rounds_total", ep.rounds_total()},
                         {"height", rec.accumulated.height},
                         {"width", rec.accumulated.width},
                         {"pixels", pixel_list(rec.accumulated)},
                         {"round_pixels", pixel_list(sketch_from_wire(rec.sketch_wire))},
                         {"p", rec.pixels},
                         {"cap", s.cap(round)},
                         {"remaining_pixels", allowed - sent},
                         {"ledger", s.ledger()},
                         {"phase", phase_name(ep.phase())}});
}

Response EpisodeService::state(Session& s) {
  const Episode& ep = *s.episode;
  json rounds = json::array();
  for (const auto& r : ep.trace().rounds) {
    json row{{"p", r.pixels}, {"pixels", pixel_list(sketch_from_wire(r.sketch_wire))}};
    row["feedback"] = r.feedback ? box_list(*r.feedback) : json(nullptr);
    rounds.push_back(std::move(row));
  }
  json out{{"id", s.id},
           {"mode", to_string(s.mode)},
           {"question", shapeworld::join_tokens(s.record.qa.question)},
           {"budgets", s.config.budgets},
           {"rounds_done", ep.rounds_done()},
           {"rounds_total", ep.rounds_total()},
           {"phase", phase_name(ep.phase())},
           {"ledger", s.ledger()},
           {"rounds", rounds}};
  if (ep.finished()) {
    out["ground_truth"] = shapeworld::answer_vocabulary()[static_cast<std::size_t>(s.record.qa.answer)];
    const int pred = ep.trace().final_prediction();
    out["prediction"] = pred >= 0 ? json(shapeworld::answer_vocabulary()[static_cast<std::size_t>(pred)]) : json(nullptr);
  }
  return reply(200, out);
}

Response EpisodeService::feedback(Session& s, const std::string& body) {
  Episode& ep = *s.episode;
  if (s.mode != Mode::human) return error(409, "protocol", "feedback comes from the machine receiver in this session");
  if (ep.finished()) return error(409, "protocol", "episode is finalized");
  if (!ep.rounds_remain()) return error(409, "protocol", "no rounds remain; submit an answer");
  FeedbackSketch fb{s.record.image.dim(1), s.record.image.dim(2), {}};
  try {
    const json req = parse_body(body);
    for (const auto& b : req.at("boxes")) {
      fb.boxes.push_back({b.at("x1").get<int>(), b.at("y1").get<int>(), b.at("x2").get<int>(), b.at("y2").get<int>(),
                          b.value("weight", 1.0)});
    }
  } catch (const json::exception& e) {
    return error(422, "malformed", e.what());
  }
  if (ep.phase() == Episode::Phase::awaiting_send) ep.send();
  try {
    ep.accept_feedback(fb);
  } catch (const ContractError& e) {
    return error(422, "malformed", e.what());
  }
  if (ep.finished()) finalize(s);
  return reply(200, json{{"charged", 5 * fb.count()},
                         {"next_round", ep.finished() ? json(nullptr) : json(ep.rounds_done() + 1)},
                         {"ledger", s.ledger()},
                         {"phase", phase_name(ep.phase())}});
}

Response EpisodeService::answer(Session& s, const std::string& body) {
  Episode& ep = *s.episode;
  if (s.mode != Mode::human) return error(409, "protocol", "the machine receiver answers in this session");
  if (ep.finished()) return error(409, "protocol", "episode is finalized");
  std::string word;
  try {
    word = parse_body(body).at("answer").get<std::string>();
  } catch (const json::exception& e) {
    return error(422, "malformed", e.what());
  }
  const int idx = shapeworld::answer_index(word);
  if (idx < 0) return error(422, "malformed", "'" + word + "' is not in the answer vocabulary");
  if (ep.phase() == Episode::Phase::awaiting_send) ep.send();
  ep.submit_answer(idx);
  finalize(s);
  const std::size_t recomputed = ep.trace().ledger.recompute();
  return reply(200, json{{"correct", idx == s.record.qa.answer},
                         {"answer", word},
                         {"ground_truth", shapeworld::answer_vocabulary()[static_cast<std::size_t>(s.record.qa.answer)]},
                         {"ledger", s.ledger()},
                         {"ledger_recomputed", recomputed},
                         {"rounds", ep.rounds_done()}});
}

Response EpisodeService::advance(Session& s) {
  Episode& ep = *s.episode;
  if (s.mode != Mode::machine) return error(409, "protocol", "advance drives machine-receiver sessions only");
  if (ep.finished()) return error(409, "protocol", "episode is finalized");
  if (ep.phase() == Episode::Phase::awaiting_send) ep.send();
  ep.respond(*receiver_);
  const auto& rec = ep.trace().rounds.back();
  if (ep.finished()) finalize(s);
  return reply(200, json{{"round", ep.rounds_done()},
                         {"p", rec.pixels},
                         {"prediction", shapeworld::answer_vocabulary()[static_cast<std::size_t>(rec.prediction)]},
                         {"feedback", rec.feedback ? box_list(*rec.feedback) : json(nullptr)},
                         {"ledger", s.ledger()},
                         {"phase", phase_name(ep.phase())}});
}

void EpisodeService::finalize(Session& s) {
  if (s.persisted || options_.trace_dir.empty()) return;
  namespace fs = std::filesystem;
  fs::create_directories(options_.trace_dir);
  const fs::path path = fs::path(options_.trace_dir) / (s.id + "." + to_string(s.mode) + ".trace");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write trace " + path.string());
  out << protocol::serialize_trace(s.episode->trace());
  s.persisted = true;
}

void EpisodeService::mount(httplib::Server& server) {
  auto bridge = [this](const httplib::Request& req, httplib::Response& res) {
    Response r = handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  server.Get(R"(/episodes.*)", bridge);
  server.Post(R"(/episodes.*)", bridge);
}

void serve(EpisodeService& service, const std::string& host, int port) {
  httplib::Server server;
  service.mount(server);
  if (!server.listen(host, port)) throw IoError("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace isqa::service
