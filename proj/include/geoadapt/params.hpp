// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "geoadapt/autodiff.hpp"
#include "geoadapt/errors.hpp"
#include "geoadapt/rng.hpp"
#include "geoadapt/tensor.hpp"

namespace geoadapt {

/// Prefix of the frozen encoder group. Everything else is trainable.
inline constexpr const char* kFrozenPrefix = "frozen/";

inline bool has_prefix(const std::string& name, const std::string& prefix) {
  return name.compare(0, prefix.size(), prefix) == 0;
}

/// Named parameters in a deterministic (lexicographic) order. Frozen-ness is
/// a property of the entry, not of the name, so tests can flip it.
template <typename T>
class ParameterSet {
 public:
  struct Entry {
    BasicTensor<T> value;
    bool frozen = false;
  };

  void add(const std::string& name, BasicTensor<T> value, bool frozen) {
    if (entries_.count(name)) throw ConfigError("duplicate parameter '" + name + "'");
    entries_[name] = Entry{std::move(value), frozen};
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  const Entry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }
  Entry& entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }

  const BasicTensor<T>& value(const std::string& name) const { return entry(name).value; }
  BasicTensor<T>& value(const std::string& name) { return entry(name).value; }

  const std::map<std::string, Entry>& entries() const noexcept { return entries_; }
  std::map<std::string, Entry>& entries() noexcept { return entries_; }

  std::size_t size() const noexcept { return entries_.size(); }

  std::int64_t count(bool frozen) const {
    std::int64_t n = 0;
    for (const auto& [name, e] : entries_)
      if (e.frozen == frozen) n += e.value.size();
    return n;
  }

  std::int64_t count_prefix(const std::string& prefix) const {
    std::int64_t n = 0;
    for (const auto& [name, e] : entries_)
      if (has_prefix(name, prefix)) n += e.value.size();
    return n;
  }

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& [name, e] : entries_) out.add(name, e.value.template cast<U>(), e.frozen);
    return out;
  }

  // Snapshot of the frozen group for freeze verification.
  ParameterSet frozen_snapshot() const {
    ParameterSet out;
    for (const auto& [name, e] : entries_)
      if (e.frozen || has_prefix(name, kFrozenPrefix)) out.add(name, e.value, e.frozen);
    return out;
  }

 private:
  std::map<std::string, Entry> entries_;
};

using ModelState = ParameterSet<float>;

/// True iff every "frozen/" parameter in `state` is bit-identical to the
/// snapshot taken at initialisation.
template <typename T>
bool freeze_check(const ParameterSet<T>& state, const ParameterSet<T>& snapshot) {
  for (const auto& [name, e] : snapshot.entries()) {
    if (!state.contains(name)) return false;
    if (!state.value(name).bit_equal(e.value)) return false;
  }
  for (const auto& [name, e] : state.entries())
    if (has_prefix(name, kFrozenPrefix) && !snapshot.contains(name)) return false;
  return true;
}

/// Lazily places parameters on a tape, one leaf per name, so a parameter used
/// several times in a forward pass accumulates a single gradient.
template <typename T>
class Binder {
 public:
  Binder(Tape<T>& tape, const ParameterSet<T>& params) : tape_(tape), params_(params) {}

  Var<T> operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    const auto& e = params_.entry(name);
    Var<T> v = tape_.parameter(name, e.value, !e.frozen && !inference_);
    bound_.emplace(name, v);
    return v;
  }

  Tape<T>& tape() { return tape_; }
  const ParameterSet<T>& params() const { return params_; }
  bool has(const std::string& name) const { return params_.contains(name); }

  // In inference mode no leaf requires a gradient and no closures are kept.
  void set_inference(bool on) { inference_ = on; }

 private:
  Tape<T>& tape_;
  const ParameterSet<T>& params_;
  std::unordered_map<std::string, Var<T>> bound_;
  bool inference_ = false;
};

namespace init {

inline Tensor normal(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<float>(rng.normal(0.0, stddev));
  return t;
}

inline Tensor constant(Shape shape, float value) { return Tensor(std::move(shape), value); }

// Registers a dense layer `prefix/w` [in x out] and `prefix/b` [out].
inline void linear(ModelState& s, const std::string& prefix, std::int64_t in, std::int64_t out,
                   double stddev, Rng& rng, bool frozen) {
  s.add(prefix + "/w", normal({in, out}, stddev, rng), frozen);
  s.add(prefix + "/b", constant({out}, 0.0f), frozen);
}

inline void layer_norm(ModelState& s, const std::string& prefix, std::int64_t d, bool frozen) {
  s.add(prefix + "/g", constant({d}, 1.0f), frozen);
  s.add(prefix + "/b", constant({d}, 0.0f), frozen);
}

}  // namespace init

}  // namespace geoadapt
