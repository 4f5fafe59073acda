// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace compnet {

// Flat INI-style config: [section] headers, key = value lines, '#' or ';'
// comments. Keys are addressed as "section.key". Consumers mark keys as
// they read them; require_all_consumed() turns leftovers into errors so
// typos surface instead of silently using defaults.
class KeyValueConfig {
 public:
  static KeyValueConfig from_file(const std::string& path);
  static KeyValueConfig from_string(const std::string& text,
                                    const std::string& origin = "<string>");

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& def) const;
  int64_t get_int(const std::string& key, int64_t def) const;
  double get_double(const std::string& key, double def) const;
  bool get_bool(const std::string& key, bool def) const;

  // Comma-separated integer list.
  std::vector<int> get_int_list(const std::string& key) const;

  void require_all_consumed() const;
  const std::string& text() const { return text_; }

 private:
  std::string origin_;
  std::string text_;
  std::map<std::string, std::string> kv_;
  mutable std::set<std::string> consumed_;
};

}  // namespace compnet
