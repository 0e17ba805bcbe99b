// Copyright 2026 The pcnr Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Line-oriented "key = value" text with '#' comments, shared by the scene,
// trajectory and training configuration files.
#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace pcnr {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KeyValue {
  std::string key;
  std::string value;
  std::size_t line = 0;  // 1-based; 0 for entries that did not come from a file
};

/// Blank lines and everything after '#' are ignored. A line without '=' or
/// with an empty key is rejected with its line number.
std::vector<KeyValue> parse_key_values(const std::string& text, const std::string& source);
std::vector<KeyValue> read_key_values(const std::filesystem::path& path);

/// Whitespace-separated numbers; rejects trailing garbage and a count mismatch.
std::vector<double> parse_numbers(const KeyValue& kv, const std::string& source, std::size_t expected);
double parse_number(const KeyValue& kv, const std::string& source);
long long parse_integer(const KeyValue& kv, const std::string& source);

std::string trim(const std::string& s);

}  // namespace pcnr
