// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

// Run configuration. Files are either a TOML subset (top-level `key = value`,
// `[table]` headers, strings, numbers, booleans and one-line arrays) or a
// JSON document such as a previous run.json. Both map onto the same JSON
// tree, which is what run.json echoes.
//
// Precedence, lowest first: built-in defaults, config file, TASAM_SEED,
// command-line flags.

#pragma once

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <set>
#include <sstream>
#include <string>

#include "json.hpp"

#include "geoadapt/errors.hpp"
#include "geoadapt/train.hpp"
#include "geoadapt/tsr.hpp"

namespace geoadapt {

using Json = nlohmann::ordered_json;

namespace toml {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

// Drops a trailing comment outside of string literals.
inline std::string strip_comment(const std::string& s) {
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_str = !in_str;
    if (s[i] == '#' && !in_str) return s.substr(0, i);
  }
  return s;
}

inline Json parse_scalar(const std::string& raw, int line) {
  const std::string v = trim(raw);
  auto fail = [&](const std::string& why) {
    return ConfigError("line " + std::to_string(line) + ": " + why + " in '" + v + "'");
  };
  if (v.empty()) throw fail("missing value");
  if (v.front() == '"') {
    if (v.size() < 2 || v.back() != '"') throw fail("unterminated string");
    std::string out;
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
      if (v[i] == '\\' && i + 2 < v.size()) {
        const char c = v[++i];
        out += c == 'n' ? '\n' : c == 't' ? '\t' : c;
      } else {
        out += v[i];
      }
    }
    return out;
  }
  if (v == "true") return true;
  if (v == "false") return false;
  std::string num;
  for (char c : v)
    if (c != '_') num += c;
  const bool integral = num.find_first_of(".eE") == std::string::npos ||
                        (num.size() > 2 && num[0] == '0' && (num[1] == 'x' || num[1] == 'X'));
  char* end = nullptr;
  if (integral) {
    if (!num.empty() && num[0] == '-') {
      const long long x = std::strtoll(num.c_str(), &end, 0);
      if (end && *end == '\0') return x;
    } else {
      const unsigned long long x = std::strtoull(num.c_str(), &end, 0);
      if (end && *end == '\0' && !num.empty()) return x;
    }
  } else {
    const double x = std::strtod(num.c_str(), &end);
    if (end && *end == '\0') return x;
  }
  throw fail("unrecognised value");
}

inline Json parse_value(const std::string& raw, int line) {
  const std::string v = trim(raw);
  if (!v.empty() && v.front() == '[') {
    if (v.back() != ']') throw ConfigError("line " + std::to_string(line) + ": arrays must close on the same line");
    Json arr = Json::array();
    const std::string body = trim(v.substr(1, v.size() - 2));
    if (body.empty()) return arr;
    std::string item;
    bool in_str = false;
    for (char c : body) {
      if (c == '"') in_str = !in_str;
      if (c == ',' && !in_str) {
        if (!trim(item).empty()) arr.push_back(parse_scalar(item, line));
        item.clear();
      } else {
        item += c;
      }
    }
    if (!trim(item).empty()) arr.push_back(parse_scalar(item, line));
    return arr;
  }
  return parse_scalar(v, line);
}

inline bool valid_key(const std::string& k) {
  if (k.empty()) return false;
  for (char c : k)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  return true;
}

inline Json parse(const std::string& text) {
  Json root = Json::object();
  Json* table = &root;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = trim(strip_comment(raw));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError("line " + std::to_string(line) + ": malformed table header");
      const std::string name = trim(s.substr(1, s.size() - 2));
      if (!valid_key(name)) throw ConfigError("line " + std::to_string(line) + ": bad table name '" + name + "'");
      if (root.contains(name)) throw ConfigError("line " + std::to_string(line) + ": table [" + name + "] repeated");
      root[name] = Json::object();
      table = &root[name];
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line) + ": expected key = value");
    const std::string key = trim(s.substr(0, eq));
    if (!valid_key(key)) throw ConfigError("line " + std::to_string(line) + ": bad key '" + key + "'");
    if (table->contains(key)) throw ConfigError("line " + std::to_string(line) + ": duplicate key '" + key + "'");
    (*table)[key] = parse_value(s.substr(eq + 1), line);
  }
  return root;
}

}  // namespace toml

/// Effective configuration as a JSON tree, in a fixed key order.
inline Json config_to_json(const TrainConfig& c, const std::string& data_dir = "") {
  const auto& m = c.model;
  Json j;
  j["seed"] = c.seed;
  j["data"] = data_dir;
  j["encoder"] = {{"patch", m.encoder.patch},       {"depth", m.encoder.depth},
                  {"dim", m.encoder.dim},           {"heads", m.encoder.heads},
                  {"mlp_ratio", m.encoder.mlp_ratio}, {"image_h", m.encoder.image_h},
                  {"image_w", m.encoder.image_w},   {"seed", m.encoder.seed}};
  j["ta_adapter"] = {{"enabled", m.adapter.enabled}, {"channels", m.adapter.channels}};
  j["tp_prompt"] = {{"enabled", m.prompt.enabled},
                    {"strategy", to_string(m.prompt.strategy)},
                    {"k", m.prompt.k},
                    {"frames", m.prompt.frames},
                    {"heads", m.prompt.heads}};
  j["ms_fusion"] = {{"enabled", m.fusion.enabled}, {"scales", m.fusion.scales}, {"heads", m.fusion.heads}};
  j["decoder"] = {{"depth", m.decoder.depth},
                  {"heads", m.decoder.heads},
                  {"mlp_ratio", m.decoder.mlp_ratio},
                  {"classes", m.decoder.classes}};
  j["train"] = {{"lr", c.lr},
                {"weight_decay", c.weight_decay},
                {"batch_size", c.batch_size},
                {"epochs", c.epochs},
                {"max_steps", c.max_steps}};
  return j;
}

namespace detail {

template <typename V>
void read(const Json& table, const std::string& where, const char* key, V& out) {
  if (!table.contains(key)) return;
  try {
    out = table.at(key).get<V>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("key " + where + "." + key + " has the wrong type: " + table.at(key).dump());
  }
}

inline void check_keys(const Json& table, const std::string& where, std::set<std::string> allowed) {
  if (!table.is_object()) throw ConfigError(where + " must be a table");
  for (const auto& [k, v] : table.items())
    if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

}  // namespace detail

/// Applies a JSON configuration tree on top of `c`. Unknown keys are errors
/// so that typos do not silently fall back to defaults.
inline void apply_config(const Json& j, TrainConfig& c, std::string* data_dir = nullptr) {
  using detail::read;
  detail::check_keys(j, "config",
                     {"seed", "data", "encoder", "ta_adapter", "tp_prompt", "ms_fusion", "decoder", "train"});
  read(j, "config", "seed", c.seed);
  if (data_dir && j.contains("data")) read(j, "config", "data", *data_dir);
  auto& m = c.model;
  if (j.contains("encoder")) {
    const auto& t = j["encoder"];
    detail::check_keys(t, "[encoder]", {"patch", "depth", "dim", "heads", "mlp_ratio", "image_h", "image_w", "seed"});
    read(t, "encoder", "patch", m.encoder.patch);
    read(t, "encoder", "depth", m.encoder.depth);
    read(t, "encoder", "dim", m.encoder.dim);
    read(t, "encoder", "heads", m.encoder.heads);
    read(t, "encoder", "mlp_ratio", m.encoder.mlp_ratio);
    read(t, "encoder", "image_h", m.encoder.image_h);
    read(t, "encoder", "image_w", m.encoder.image_w);
    read(t, "encoder", "seed", m.encoder.seed);
  }
  if (j.contains("ta_adapter")) {
    const auto& t = j["ta_adapter"];
    detail::check_keys(t, "[ta_adapter]", {"enabled", "channels"});
    read(t, "ta_adapter", "enabled", m.adapter.enabled);
    read(t, "ta_adapter", "channels", m.adapter.channels);
  }
  if (j.contains("tp_prompt")) {
    const auto& t = j["tp_prompt"];
    detail::check_keys(t, "[tp_prompt]", {"enabled", "strategy", "k", "frames", "heads"});
    read(t, "tp_prompt", "enabled", m.prompt.enabled);
    std::string strategy = to_string(m.prompt.strategy);
    read(t, "tp_prompt", "strategy", strategy);
    m.prompt.strategy = parse_prompt_strategy(strategy);
    read(t, "tp_prompt", "k", m.prompt.k);
    read(t, "tp_prompt", "frames", m.prompt.frames);
    read(t, "tp_prompt", "heads", m.prompt.heads);
  }
  if (j.contains("ms_fusion")) {
    const auto& t = j["ms_fusion"];
    detail::check_keys(t, "[ms_fusion]", {"enabled", "scales", "heads"});
    read(t, "ms_fusion", "enabled", m.fusion.enabled);
    read(t, "ms_fusion", "scales", m.fusion.scales);
    read(t, "ms_fusion", "heads", m.fusion.heads);
  }
  if (j.contains("decoder")) {
    const auto& t = j["decoder"];
    detail::check_keys(t, "[decoder]", {"depth", "heads", "mlp_ratio", "classes"});
    read(t, "decoder", "depth", m.decoder.depth);
    read(t, "decoder", "heads", m.decoder.heads);
    read(t, "decoder", "mlp_ratio", m.decoder.mlp_ratio);
    read(t, "decoder", "classes", m.decoder.classes);
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    detail::check_keys(t, "[train]", {"lr", "weight_decay", "batch_size", "epochs", "max_steps"});
    read(t, "train", "lr", c.lr);
    read(t, "train", "weight_decay", c.weight_decay);
    read(t, "train", "batch_size", c.batch_size);
    read(t, "train", "epochs", c.epochs);
    read(t, "train", "max_steps", c.max_steps);
  }
}

/// Reads a TOML-subset file, a JSON config, or a run.json (whose "config"
/// member is used).
inline Json load_config_file(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  const std::string text(bytes.begin(), bytes.end());
  std::size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    Json j;
    try {
      j = Json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
    if (j.contains("config") && j["config"].is_object()) return j["config"];
    return j;
  }
  try {
    return toml::parse(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

/// TASAM_SEED, when set, replaces the file's seed (flags still win).
inline void apply_seed_env(TrainConfig& c) {
  const char* env = std::getenv("TASAM_SEED");
  if (!env || !*env) return;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 0);
  if (!end || *end != '\0') throw ConfigError(std::string("TASAM_SEED is not an integer: ") + env);
  c.seed = v;
}

}  // namespace geoadapt
