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

#include "pcnr/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace pcnr {

namespace {

std::string where(const std::string& source, const KeyValue& kv) {
  return kv.line ? source + ":" + std::to_string(kv.line) : source;
}

}  // namespace

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<KeyValue> parse_key_values(const std::string& text, const std::string& source) {
  std::vector<KeyValue> out;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(number) + ": expected 'key = value', got '" + line + "'");
    }
    KeyValue kv{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), number};
    if (kv.key.empty()) throw ConfigError(source + ":" + std::to_string(number) + ": empty key");
    out.push_back(std::move(kv));
  }
  return out;
}

std::vector<KeyValue> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_key_values(text.str(), path.string());
}

std::vector<double> parse_numbers(const KeyValue& kv, const std::string& source, std::size_t expected) {
  std::istringstream in(kv.value);
  std::vector<double> out;
  std::string token;
  while (in >> token) {
    try {
      std::size_t used = 0;
      const double v = std::stod(token, &used);
      if (used != token.size() || !std::isfinite(v)) throw std::invalid_argument(token);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError(where(source, kv) + ": '" + kv.key + "': '" + token + "' is not a finite number");
    }
  }
  if (expected && out.size() != expected) {
    throw ConfigError(where(source, kv) + ": '" + kv.key + "' expects " + std::to_string(expected) +
                      " numbers, got " + std::to_string(out.size()));
  }
  return out;
}

double parse_number(const KeyValue& kv, const std::string& source) { return parse_numbers(kv, source, 1)[0]; }

long long parse_integer(const KeyValue& kv, const std::string& source) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(kv.value, &used);
    if (used != kv.value.size()) throw std::invalid_argument(kv.value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(where(source, kv) + ": '" + kv.key + "': '" + kv.value + "' is not an integer");
  }
}

}  // namespace pcnr
