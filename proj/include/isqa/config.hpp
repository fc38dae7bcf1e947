#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "isqa/tensor.hpp"

namespace isqa {

// Flat key-value settings grouped in [sections]; every key is addressed as
// section.key. Only keys present in the defaults are accepted.
class RunConfig {
public:
  RunConfig();  // all defaults

  // Lines are `key = value`, `[section]`, blank, or `#` comments.
  void merge_text(const std::string& text);
  void merge_file(const std::string& path);
  // `section.key=value`, or `key=value` when the bare key names one section only.
  void override_with(const std::string& assignment);
  void override_all(const std::vector<std::string>& assignments);

  // Throws ConfigError naming every invalid key.
  void validate() const;

  std::string resolved_text() const;

  const std::string& get(const std::string& key) const;
  std::string str(const std::string& key) const { return get(key); }
  Real real(const std::string& key) const;
  long long integer(const std::string& key) const;
  std::uint64_t seed(const std::string& key) const;
  std::vector<Real> reals(const std::string& key) const;
  std::vector<int> integers(const std::string& key) const;
  std::vector<std::string> list(const std::string& key) const;

  void set(const std::string& key, const std::string& value);

private:
  std::string resolve_key(const std::string& key) const;
  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
};

}  // namespace isqa
