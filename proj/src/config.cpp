// SPDX-License-Identifier: Apache-2.0
#include "compnet/config.hpp"

#include <fstream>
#include <sstream>
#include <vector>

#include "compnet/errors.hpp"

namespace compnet {

namespace {

std::string trim(const std::string& s) {
  const size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return from_string(ss.str(), path);
}

KeyValueConfig KeyValueConfig::from_string(const std::string& text, const std::string& origin) {
  KeyValueConfig cfg;
  cfg.origin_ = origin;
  cfg.text_ = text;
  std::istringstream is(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": unterminated section");
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty())
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty section name");
      continue;
    }
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string val = trim(t.substr(eq + 1));
    if (key.empty())
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    if (val.size() >= 2 && ((val.front() == '"' && val.back() == '"') ||
                            (val.front() == '\'' && val.back() == '\''))) {
      val = val.substr(1, val.size() - 2);
    } else {
      // Inline comments are only recognized on unquoted values.
      const size_t cut = val.find_first_of("#;");
      if (cut != std::string::npos) val = trim(val.substr(0, cut));
    }
    const std::string full = section.empty() ? key : section + "." + key;
    if (cfg.kv_.count(full))
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key " + full);
    cfg.kv_[full] = val;
  }
  return cfg;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& def) const {
  consumed_.insert(key);
  auto it = kv_.find(key);
  return it == kv_.end() ? def : it->second;
}

int64_t KeyValueConfig::get_int(const std::string& key, int64_t def) const {
  consumed_.insert(key);
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  try {
    size_t pos = 0;
    const int64_t v = std::stoll(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": key " + key + ": not an integer: '" + it->second + "'");
  }
}

double KeyValueConfig::get_double(const std::string& key, double def) const {
  consumed_.insert(key);
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  try {
    size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": key " + key + ": not a number: '" + it->second + "'");
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool def) const {
  consumed_.insert(key);
  auto it = kv_.find(key);
  if (it == kv_.end()) return def;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError(origin_ + ": key " + key + ": not a boolean: '" + it->second + "'");
}

std::vector<int> KeyValueConfig::get_int_list(const std::string& key) const {
  consumed_.insert(key);
  std::vector<int> out;
  auto it = kv_.find(key);
  if (it == kv_.end()) return out;
  std::stringstream ss(it->second);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    try {
      out.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw ConfigError(origin_ + ": key " + key + ": bad list element '" + tok + "'");
    }
  }
  return out;
}

void KeyValueConfig::require_all_consumed() const {
  std::string unknown;
  for (const auto& [k, v] : kv_)
    if (!consumed_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
  if (!unknown.empty()) throw ConfigError(origin_ + ": unknown config keys: " + unknown);
}

}  // namespace compnet
