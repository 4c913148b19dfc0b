// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

// Display-only outputs: SVG line plots and binary PPM heatmaps.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "geoadapt/model.hpp"

namespace geoadapt {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace detail

/// Line plot with markers, axis ticks at the data extremes and a legend.
inline std::string svg_line_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                                 const std::vector<Series>& series) {
  constexpr double W = 640, H = 400, L = 70, R = 150, T = 40, B = 50;
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]), x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]), y1 = std::max(y1, s.y[i]);
    }
  if (x0 > x1) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad, y1 += pad;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

  std::string s = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::num(W) + "\" height=\"" + detail::num(H) +
       "\" viewBox=\"0 0 " + detail::num(W) + " " + detail::num(H) + "\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + detail::num(W / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" +
       detail::xml_escape(title) + "</text>\n";
  s += "<line x1=\"" + detail::num(L) + "\" y1=\"" + detail::num(H - B) + "\" x2=\"" + detail::num(W - R) +
       "\" y2=\"" + detail::num(H - B) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + detail::num(L) + "\" y1=\"" + detail::num(T) + "\" x2=\"" + detail::num(L) + "\" y2=\"" +
       detail::num(H - B) + "\" stroke=\"black\"/>\n";
  for (double v : {x0, x1})
    s += "<text x=\"" + detail::num(px(v)) + "\" y=\"" + detail::num(H - B + 16) +
         "\" text-anchor=\"middle\" font-size=\"11\">" + detail::num(v) + "</text>\n";
  for (double v : {y0, y1})
    s += "<text x=\"" + detail::num(L - 6) + "\" y=\"" + detail::num(py(v) + 4) +
         "\" text-anchor=\"end\" font-size=\"11\">" + detail::num(v) + "</text>\n";
  s += "<text x=\"" + detail::num((L + W - R) / 2) + "\" y=\"" + detail::num(H - 12) +
       "\" text-anchor=\"middle\" font-size=\"12\">" + detail::xml_escape(xlabel) + "</text>\n";
  s += "<text x=\"18\" y=\"" + detail::num((T + H - B) / 2) + "\" text-anchor=\"middle\" font-size=\"12\" "
       "transform=\"rotate(-90 18 " + detail::num((T + H - B) / 2) + ")\">" + detail::xml_escape(ylabel) +
       "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& sr = series[k];
    const std::string c = colors[k % 6];
    std::string pts;
    for (std::size_t i = 0; i < sr.x.size() && i < sr.y.size(); ++i) {
      if (!std::isfinite(sr.y[i])) continue;
      pts += detail::num(px(sr.x[i])) + "," + detail::num(py(sr.y[i])) + " ";
    }
    s += "<polyline fill=\"none\" stroke=\"" + c + "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    if (sr.x.size() <= 20)
      for (std::size_t i = 0; i < sr.x.size() && i < sr.y.size(); ++i)
        s += "<circle cx=\"" + detail::num(px(sr.x[i])) + "\" cy=\"" + detail::num(py(sr.y[i])) +
             "\" r=\"3\" fill=\"" + c + "\"/>\n";
    const double ly = T + 16 * double(k);
    s += "<line x1=\"" + detail::num(W - R + 10) + "\" y1=\"" + detail::num(ly) + "\" x2=\"" +
         detail::num(W - R + 30) + "\" y2=\"" + detail::num(ly) + "\" stroke=\"" + c + "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + detail::num(W - R + 34) + "\" y=\"" + detail::num(ly + 4) + "\" font-size=\"11\">" +
         detail::xml_escape(sr.name) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

/// Scalar map [H x W] with values in [0, 1] rendered through a blue-to-yellow
/// ramp as binary PPM.
inline std::string ppm_heatmap(const Tensor& map) {
  if (map.ndim() != 2) throw DimensionError("heatmap expects a [H x W] map, got " + shape_str(map.shape()));
  const std::int64_t h = map.dim(0), w = map.dim(1);
  std::string s = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  s.reserve(s.size() + static_cast<std::size_t>(3 * h * w));
  for (std::int64_t i = 0; i < h * w; ++i) {
    const double v = std::clamp(double(map[i]), 0.0, 1.0);
    const double r = std::clamp(1.6 * v - 0.4, 0.0, 1.0);
    const double g = std::clamp(1.2 * v, 0.0, 1.0) * 0.9;
    const double b = std::clamp(0.8 - v, 0.0, 1.0) + 0.2 * (1 - v);
    s += static_cast<char>(std::lround(255 * r));
    s += static_cast<char>(std::lround(255 * g));
    s += static_cast<char>(std::lround(255 * std::min(b, 1.0)));
  }
  return s;
}

/// Rescales to [0, 1] by the map's own range (constant maps become 0).
inline Tensor min_max_normalize(Tensor m) {
  if (m.size() == 0) return m;
  const auto [lo, hi] = std::minmax_element(m.values().begin(), m.values().end());
  const float a = *lo, range = *hi - *lo;
  for (auto& v : m.values()) v = range > 0 ? (v - a) / range : 0.0f;
  return m;
}

struct Heatmaps {
  std::optional<Tensor> gate;       // mean gate per token, [H x W]; absent without the adapter
  std::optional<Tensor> attention;  // image-to-prompt attention mass, [H x W]; absent without prompts
};

/// Gate and decoder attention maps of one sample, bilinearly upsampled from
/// the token grid to the input resolution.
inline Heatmaps heatmaps(const ModelState& state, const ModelConfig& cfg, const PreparedSample<float>& s) {
  Tape<float> tape;
  Binder<float> b(tape, state);
  b.set_inference(true);
  CachedSource<float> src(s);
  ForwardTrace<float> tr;
  (void)forward_logits(b, cfg, src, &tr);
  const std::int64_t gh = tr.grid_h, gw = tr.grid_w, n = gh * gw;
  auto upsample = [&](const Tensor& grid) {
    return resize_values(grid.reshaped({1, gh, gw}), s.height, s.width).reshaped({s.height, s.width});
  };
  Heatmaps out;
  if (tr.native_gate) {
    const Tensor& g = tr.native_gate->value();
    const std::int64_t d = g.dim(1);
    Tensor m({gh, gw});
    for (std::int64_t t = 0; t < n; ++t) {
      double acc = 0;
      for (std::int64_t c = 0; c < d; ++c) acc += g[t * d + c];
      m[t] = static_cast<float>(acc / double(d));
    }
    out.gate = upsample(m);
  }
  if (!tr.decoder.attention.empty() && tr.decoder.attention[0].dim(1) > n) {
    const std::int64_t cols = tr.decoder.attention[0].dim(1);
    Tensor m({gh, gw});
    for (const auto& head : tr.decoder.attention) {
      const Tensor& a = head.value();
      for (std::int64_t t = 0; t < n; ++t) {
        double acc = 0;
        for (std::int64_t c = n; c < cols; ++c) acc += a[t * cols + c];
        m[t] += static_cast<float>(acc / double(tr.decoder.attention.size()));
      }
    }
    out.attention = upsample(m);
  }
  return out;
}

/// Mean of `map` over pixels whose label is in `classes`; NaN when none.
inline double masked_mean(const Tensor& map, const std::vector<int>& labels, std::initializer_list<int> classes) {
  double acc = 0;
  std::int64_t cnt = 0;
  for (std::int64_t i = 0; i < map.size(); ++i)
    if (std::find(classes.begin(), classes.end(), labels[static_cast<std::size_t>(i)]) != classes.end()) {
      acc += map[i];
      ++cnt;
    }
  return cnt ? acc / double(cnt) : std::nan("");
}

}  // namespace geoadapt
