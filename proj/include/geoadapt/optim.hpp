// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

// AdamW with decoupled weight decay:
//   m = b1 m + (1-b1) g,  v = b2 v + (1-b2) g^2
//   w -= lr (m_hat / (sqrt(v_hat) + eps) + wd w)

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "geoadapt/params.hpp"

namespace geoadapt {

struct AdamWConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

  /// Applies one update to every non-frozen entry that has a gradient.
  /// Entries with no gradient this step are left untouched.
  void step(ModelState& params, const GradientMap<float>& grads) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (auto& [name, e] : params.entries()) {
      if (e.frozen) continue;
      auto g = grads.find(name);
      if (g == grads.end()) continue;
      auto& st = state_[name];
      if (st.m.empty()) {
        st.m = Tensor(e.value.shape());
        st.v = Tensor(e.value.shape());
      }
      float* w = e.value.data();
      float* m = st.m.data();
      float* v = st.v.data();
      const float* gr = g->second.data();
      for (std::int64_t i = 0; i < e.value.size(); ++i) {
        const double gi = gr[i];
        m[i] = static_cast<float>(cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi);
        v[i] = static_cast<float>(cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi);
        const double mh = m[i] / c1, vh = v[i] / c2;
        const double upd = mh / (std::sqrt(vh) + cfg_.eps) + cfg_.weight_decay * w[i];
        w[i] = static_cast<float>(w[i] - cfg_.lr * upd);
      }
    }
  }

  std::int64_t steps() const { return t_; }

 private:
  struct Moments {
    Tensor m, v;
  };
  AdamWConfig cfg_;
  std::int64_t t_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace geoadapt
