// Copyright 2026 The rcrn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "rcrn/errors.hpp"

namespace rcrn {

namespace detail {

// Bare key=value line parsing shared by RunConfig and the checkpoint config
// entry. No key whitelist at this level.
std::map<std::string, std::string> parse_kv_lines(const std::string& text);
std::string serialize_kv_lines(const std::map<std::string, std::string>& kv);

}  // namespace detail

// Flat `key=value` run configuration. `#` starts a comment, blank lines are
// skipped, keys outside the known set are rejected.
class RunConfig {
 public:
  static const std::vector<std::string>& known_keys();

  static RunConfig parse(const std::string& text);
  static RunConfig parse_file(const std::string& path);
  std::string serialize() const;  // sorted keys, one per line

  bool has(const std::string& key) const { return kv_.count(key) != 0; }
  void set(const std::string& key, const std::string& value);

  // Throws ConfigError "missing key: <key>" when absent.
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& dflt) const;
  long long get_int(const std::string& key) const;
  long long get_int_or(const std::string& key, long long dflt) const;
  double get_num(const std::string& key) const;
  double get_num_or(const std::string& key, double dflt) const;

 private:
  std::map<std::string, std::string> kv_;
};

}  // namespace rcrn
