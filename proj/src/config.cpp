#include "isqa/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "isqa/errors.hpp"

namespace isqa {

namespace {

const std::vector<std::pair<std::string, std::string>>& defaults() {
  static const std::vector<std::pair<std::string, std::string>> d = {
      {"data.seed", "7"},
      {"data.train", "5000"},
      {"data.eval", "1000"},
      {"data.min_objects", "1"},
      {"data.max_objects", "5"},
      {"data.dir", ""},
      {"model.perceptual_seed", "24301"},
      {"pretrain.vision_epochs", "10"},
      {"pretrain.vision_lr", "0.003"},
      {"pretrain.epochs", "6"},
      {"pretrain.lr", "0.005"},
      {"pretrain.batch", "32"},
      {"train.a", "0.5"},
      {"train.seed", "0"},
      {"train.lr", "0.001"},
      {"train.batch", "32"},
      {"train.epochs", "20"},
      {"train.optimizer", "adam"},
      {"train.clip", "5"},
      {"train.warm_start", "true"},
      {"train.sketch_epochs", "3"},
      {"train.limit", "0"},
      {"train.vision", "frozen"},
      {"train.name", ""},
      {"episode.budget", "0.3"},
      {"episode.rounds", "1"},
      {"episode.policy", "even"},
      {"episode.max_boxes", "5"},
      {"episode.top_answers", "1"},
      {"episode.index", "0"},
      {"episode.checkpoint", ""},
      {"eval.budgets", "0.01,0.03,0.05,0.1,0.2,0.3,0.5"},
      {"eval.rounds", "1,2"},
      {"eval.checkpoints", "pragmatic,prageo,geometric"},
      {"eval.limit", "0"},
      {"serve.host", "127.0.0.1"},
      {"serve.port", "8080"},
      {"serve.mode", "human"},
      {"serve.checkpoint", ""},
  };
  return d;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

bool parses_real(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    return used == s.size() && std::isfinite(v);
  } catch (const std::logic_error&) {
    return false;
  }
}

bool parses_int(const std::string& s) {
  try {
    std::size_t used = 0;
    std::stoll(s, &used);
    return used == s.size();
  } catch (const std::logic_error&) {
    return false;
  }
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& [k, v] : defaults()) {
    values_[k] = v;
    order_.push_back(k);
  }
}

std::string RunConfig::resolve_key(const std::string& key) const {
  if (values_.count(key)) return key;
  if (key.find('.') == std::string::npos) {
    std::vector<std::string> hits;
    for (const auto& k : order_)
      if (k.substr(k.find('.') + 1) == key) hits.push_back(k);
    if (hits.size() == 1) return hits.front();
    if (hits.size() > 1) throw ConfigError("ambiguous key '" + key + "'; qualify it with a section");
  }
  throw ConfigError("unknown key '" + key + "'");
}

void RunConfig::set(const std::string& key, const std::string& value) { values_[resolve_key(key)] = value; }

void RunConfig::merge_text(const std::string& text) {
  std::stringstream in(text);
  std::string line, section;
  std::vector<std::string> problems;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') problems.push_back("line " + std::to_string(number) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      problems.push_back("line " + std::to_string(number) + ": expected key = value");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string full = section.empty() ? key : section + "." + key;
    try {
      set(full, trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      problems.push_back("line " + std::to_string(number) + ": " + e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg;
    for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + p;
    throw ConfigError(msg);
  }
}

void RunConfig::merge_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path);
  merge_text(std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()));
}

void RunConfig::override_with(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::override_all(const std::vector<std::string>& assignments) {
  std::vector<std::string> problems;
  for (const auto& a : assignments) {
    try {
      override_with(a);
    } catch (const ConfigError& e) {
      problems.push_back(e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg;
    for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + p;
    throw ConfigError(msg);
  }
}

const std::string& RunConfig::get(const std::string& key) const { return values_.at(resolve_key(key)); }

Real RunConfig::real(const std::string& key) const {
  if (!parses_real(get(key))) throw ConfigError(key + " must be a number, got '" + get(key) + "'");
  return std::stod(get(key));
}

long long RunConfig::integer(const std::string& key) const {
  if (!parses_int(get(key))) throw ConfigError(key + " must be an integer, got '" + get(key) + "'");
  return std::stoll(get(key));
}

std::uint64_t RunConfig::seed(const std::string& key) const {
  const long long v = integer(key);
  if (v < 0) throw ConfigError(key + " must be non-negative");
  return static_cast<std::uint64_t>(v);
}

std::vector<std::string> RunConfig::list(const std::string& key) const { return split(get(key), ','); }

std::vector<Real> RunConfig::reals(const std::string& key) const {
  std::vector<Real> out;
  for (const auto& item : list(key)) {
    if (!parses_real(item)) throw ConfigError(key + " has non-numeric entry '" + item + "'");
    out.push_back(std::stod(item));
  }
  return out;
}

std::vector<int> RunConfig::integers(const std::string& key) const {
  std::vector<int> out;
  for (const auto& item : list(key)) {
    if (!parses_int(item)) throw ConfigError(key + " has non-integer entry '" + item + "'");
    out.push_back(std::stoi(item));
  }
  return out;
}

void RunConfig::validate() const {
  std::vector<std::string> bad;
  auto check = [&](const std::string& key, auto&& ok, const std::string& why) {
    try {
      if (!ok()) bad.push_back(key + " " + why);
    } catch (const ConfigError& e) {
      bad.push_back(e.what());
    }
  };
  for (const char* k : {"data.train", "data.eval", "pretrain.epochs", "pretrain.vision_epochs", "pretrain.batch",
                        "train.batch", "train.epochs", "train.sketch_epochs", "train.limit"})
    check(k, [&] { return integer(k) >= 0; }, "must be >= 0");
  for (const char* k : {"data.seed", "train.seed"}) check(k, [&] { return integer(k) >= 0; }, "must be >= 0");
  check("data.eval", [&] { return integer("data.eval") >= 1; }, "must be >= 1");
  check("data.min_objects", [&] { return integer("data.min_objects") >= 0; }, "must be >= 0");
  check("data.max_objects", [&] { return integer("data.max_objects") >= integer("data.min_objects"); },
        "must be >= data.min_objects");
  check("model.perceptual_seed", [&] { return integer("model.perceptual_seed") >= 0; }, "must be >= 0");
  check("train.a", [&] { return real("train.a") >= 0 && real("train.a") <= 1; }, "must lie in [0, 1]");
  check("train.lr", [&] { return real("train.lr") > 0; }, "must be positive");
  check("pretrain.lr", [&] { return real("pretrain.lr") > 0; }, "must be positive");
  check("pretrain.vision_lr", [&] { return real("pretrain.vision_lr") > 0; }, "must be positive");
  check("train.vision", [&] { return get("train.vision") == "frozen" || get("train.vision") == "trainable"; },
        "must be frozen or trainable");
  check("train.batch", [&] { return integer("train.batch") >= 1; }, "must be >= 1");
  check("train.clip", [&] { return real("train.clip") > 0; }, "must be positive");
  check("train.optimizer", [&] { return get("train.optimizer") == "adam" || get("train.optimizer") == "sgd"; },
        "must be adam or sgd");
  check("train.warm_start", [&] { return get("train.warm_start") == "true" || get("train.warm_start") == "false"; },
        "must be true or false");
  check("episode.budget", [&] { return real("episode.budget") > 0 && real("episode.budget") <= 1; },
        "must lie in (0, 1]");
  check("episode.rounds", [&] { return integer("episode.rounds") >= 1 && integer("episode.rounds") <= 3; },
        "must lie in [1, 3]");
  check("episode.policy", [&] { return get("episode.policy") == "even" || get("episode.policy") == "front"; },
        "must be even or front");
  check("episode.max_boxes", [&] { return integer("episode.max_boxes") >= 0; }, "must be >= 0");
  check("episode.top_answers", [&] { return integer("episode.top_answers") >= 1; }, "must be >= 1");
  check("episode.index", [&] { return integer("episode.index") >= 0; }, "must be >= 0");
  check("eval.budgets", [&] {
    const auto b = reals("eval.budgets");
    return !b.empty() && std::all_of(b.begin(), b.end(), [](Real v) { return v > 0 && v <= 1; });
  }, "must be a non-empty list in (0, 1]");
  check("eval.rounds", [&] {
    const auto r = integers("eval.rounds");
    return !r.empty() && std::all_of(r.begin(), r.end(), [](int v) { return v >= 1 && v <= 3; });
  }, "must be a non-empty list in [1, 3]");
  check("eval.limit", [&] { return integer("eval.limit") >= 0; }, "must be >= 0");
  check("serve.port", [&] { return integer("serve.port") >= 0 && integer("serve.port") < 65536; },
        "must be a TCP port");
  check("serve.mode", [&] { return get("serve.mode") == "human" || get("serve.mode") == "machine"; },
        "must be human or machine");
  if (!bad.empty()) {
    std::string msg = "invalid configuration: ";
    for (std::size_t i = 0; i < bad.size(); ++i) msg += (i ? "; " : "") + bad[i];
    throw ConfigError(msg);
  }
}

std::string RunConfig::resolved_text() const {
  std::string out, section;
  for (const auto& k : order_) {
    const auto dot = k.find('.');
    const std::string s = k.substr(0, dot);
    if (s != section) {
      out += (out.empty() ? "[" : "\n[") + s + "]\n";
      section = s;
    }
    out += k.substr(dot + 1) + " = " + values_.at(k) + "\n";
  }
  return out;
}

}  // namespace isqa
