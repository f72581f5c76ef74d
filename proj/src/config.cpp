// Copyright 2026 The rcrn Authors
// SPDX-License-Identifier: Apache-2.0

#include "rcrn/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace rcrn {

namespace detail {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

std::map<std::string, std::string> parse_kv_lines(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (kv.count(key))
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": duplicate key: " + key);
    kv.emplace(std::move(key), std::move(value));
  }
  return kv;
}

std::string serialize_kv_lines(const std::map<std::string, std::string>& kv) {
  std::string out;
  for (const auto& [k, v] : kv) {
    out += k;
    out += '=';
    out += v;
    out += '\n';
  }
  return out;
}

}  // namespace detail

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys = {
      "atom",        "batch_size",   "bench_path",       "checkpoint_path",
      "dev_path",    "embed_dim",    "embed_path",       "encoder_kind",
      "epochs",      "head_hidden",  "hidden_dim",       "layers",
      "lr",          "metrics_path", "output_gate_mode", "seed",
      "train_path",  "workers"};
  return keys;
}

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  cfg.kv_ = detail::parse_kv_lines(text);
  const auto& known = known_keys();
  for (const auto& [k, v] : cfg.kv_)
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw ConfigError("unknown key: " + k);
  return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string RunConfig::serialize() const {
  return detail::serialize_kv_lines(kv_);
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto& known = known_keys();
  if (std::find(known.begin(), known.end(), key) == known.end())
    throw ConfigError("unknown key: " + key);
  kv_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = kv_.find(key);
  if (it == kv_.end()) throw ConfigError("missing key: " + key);
  return it->second;
}

std::string RunConfig::get_or(const std::string& key,
                              const std::string& dflt) const {
  auto it = kv_.find(key);
  return it == kv_.end() ? dflt : it->second;
}

namespace {

long long parse_int(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("key " + key + ": expected integer, got '" + v + "'");
  }
  if (pos != v.size())
    throw ConfigError("key " + key + ": expected integer, got '" + v + "'");
  return out;
}

double parse_num(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("key " + key + ": expected number, got '" + v + "'");
  }
  if (pos != v.size())
    throw ConfigError("key " + key + ": expected number, got '" + v + "'");
  return out;
}

}  // namespace

long long RunConfig::get_int(const std::string& key) const {
  return parse_int(key, get(key));
}

long long RunConfig::get_int_or(const std::string& key, long long dflt) const {
  return has(key) ? get_int(key) : dflt;
}

double RunConfig::get_num(const std::string& key) const {
  return parse_num(key, get(key));
}

double RunConfig::get_num_or(const std::string& key, double dflt) const {
  return has(key) ? get_num(key) : dflt;
}

}  // namespace rcrn
