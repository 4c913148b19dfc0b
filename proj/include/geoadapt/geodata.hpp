// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

// Procedural scenes with four land-cover classes whose separability is tied
// to a single input modality each:
//
//   0 water      low basins of the DEM, bluish in RGB
//   1 lowland    mid elevations, grass colour
//   2 ridge      high elevations, the same grass colour (DEM-only)
//   3 farmland   lowland of a farming scene; grass colour in the latest
//                frame, crop-cycle colours in earlier ones (time-only)
//
// Water-coloured speckles of 3-6 px sit on ridges as small class-0 objects.
// Class boundaries come from fixed quantiles of the per-sample standardised
// DEM, which is also what the model sees.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "geoadapt/errors.hpp"
#include "geoadapt/rng.hpp"
#include "geoadapt/sample.hpp"
#include "geoadapt/terrain_adapter.hpp"
#include "geoadapt/tsr.hpp"

namespace geoadapt {

inline constexpr int kWater = 0, kLowland = 1, kRidge = 2, kFarmland = 3;

struct GenConfig {
  int height = 64;
  int width = 64;
  int classes = 4;
  int frames = 5;          // temporal stack length; the last frame is the image
  int patch = 8;           // extents must be divisible by the encoder patch
  double water_ratio = 0.2;
  double ridge_ratio = 0.3;
  double farm_ratio = 0.5;  // probability that a field's lowland is farmland
  int fields = 1;           // fields per side; each field is farmed independently
  int speckles = 6;         // placement attempts per scene
  int speckle_min = 3;
  int speckle_max = 6;
  double roughness = 0.45;  // diamond-square amplitude decay per octave
  double texture = 0.04;
  double noise = 0.055;
  std::uint64_t seed = 0;
};

inline void validate(const GenConfig& g) {
  if (g.height < 1 || g.width < 1) throw ConfigError("image extents must be positive");
  if (g.patch < 1 || g.height % g.patch != 0 || g.width % g.patch != 0)
    throw ConfigError("image extents " + std::to_string(g.height) + "x" + std::to_string(g.width) +
                      " not divisible by patch size " + std::to_string(g.patch));
  if (g.classes != 4) throw ConfigError("the generator emits exactly 4 classes");
  if (g.frames < 1) throw ConfigError("temporal stack length T must be >= 1");
  auto ratio = [](double r, const char* what) {
    if (!(r > 0.0 && r < 1.0))
      throw ConfigError(std::string(what) + " ratio must lie in (0, 1), got " + std::to_string(r));
  };
  ratio(g.water_ratio, "water");
  ratio(g.ridge_ratio, "ridge");
  ratio(g.farm_ratio, "farmland");
  if (g.water_ratio + g.ridge_ratio >= 1.0)
    throw ConfigError("water and ridge ratios leave no lowland");
  if (g.fields < 1 || g.height % g.fields != 0 || g.width % g.fields != 0)
    throw ConfigError("field count must divide the image extents");
  if (g.speckles < 1) throw ConfigError("speckle count must be >= 1");
  if (g.speckle_min < 1 || g.speckle_max < g.speckle_min)
    throw ConfigError("speckle size range is empty");
  if (g.noise < 0.0 || g.texture < 0.0) throw ConfigError("noise amplitudes must be non-negative");
}

using Rgb = std::array<double, 3>;

inline constexpr Rgb kWaterRgb{0.20, 0.35, 0.60};
inline constexpr Rgb kGrassRgb{0.30, 0.50, 0.25};
// Farmland colour by frame offset from the latest observation (index 0 is
// the latest, which matches grass).
inline constexpr std::array<Rgb, 5> kCropCycle{{{0.30, 0.50, 0.25},
                                                {0.42, 0.50, 0.22},
                                                {0.48, 0.36, 0.20},
                                                {0.55, 0.50, 0.32},
                                                {0.48, 0.36, 0.20}}};

inline Rgb crop_colour(int offset) {
  return kCropCycle[static_cast<std::size_t>(offset % static_cast<int>(kCropCycle.size()))];
}

// Standard normal quantile by bisection on erfc.
inline double normal_quantile(double p) {
  double lo = -10.0, hi = 10.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Diamond-square height field on the smallest 2^n + 1 grid covering h x w,
/// cropped to h x w. Returned row-major.
inline std::vector<double> diamond_square(int h, int w, double roughness, Rng& rng) {
  int n = 1;
  while (n < std::max(h, w)) n *= 2;
  const int size = n + 1;
  std::vector<double> g(static_cast<std::size_t>(size) * size, 0.0);
  auto at = [&](int y, int x) -> double& { return g[static_cast<std::size_t>(y) * size + x]; };
  at(0, 0) = rng.uniform(-1, 1);
  at(0, n) = rng.uniform(-1, 1);
  at(n, 0) = rng.uniform(-1, 1);
  at(n, n) = rng.uniform(-1, 1);
  double amp = 1.0;
  for (int step = n; step > 1; step /= 2) {
    const int half = step / 2;
    for (int y = half; y < size; y += step)
      for (int x = half; x < size; x += step) {
        const double avg =
            (at(y - half, x - half) + at(y - half, x + half) + at(y + half, x - half) + at(y + half, x + half)) / 4;
        at(y, x) = avg + amp * rng.uniform(-1, 1);
      }
    for (int y = 0; y < size; y += half)
      for (int x = (y / half) % 2 == 0 ? half : 0; x < size; x += step) {
        double sum = 0.0;
        int cnt = 0;
        if (y >= half) sum += at(y - half, x), ++cnt;
        if (y + half < size) sum += at(y + half, x), ++cnt;
        if (x >= half) sum += at(y, x - half), ++cnt;
        if (x + half < size) sum += at(y, x + half), ++cnt;
        at(y, x) = sum / cnt + amp * rng.uniform(-1, 1);
      }
    amp *= roughness;
  }
  std::vector<double> out(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out[static_cast<std::size_t>(y) * w + x] = at(y, x);
  return out;
}

/// One scene from its own seed.
inline Sample generate_sample(const GenConfig& g, std::uint64_t seed) {
  Rng rng(seed);
  const int h = g.height, w = g.width;
  const std::size_t n = static_cast<std::size_t>(h) * w;

  const auto height = diamond_square(h, w, g.roughness, rng);
  Sample s;
  s.seed = seed;
  s.dem = Tensor(Shape{1, h, w});
  for (std::size_t i = 0; i < n; ++i) s.dem[static_cast<std::int64_t>(i)] = static_cast<float>(100.0 * height[i]);

  // Labels are thresholds on exactly the standardised DEM the model consumes.
  const Tensor z = normalize_dem(s.dem);
  const double lo = normal_quantile(g.water_ratio), hi = normal_quantile(1.0 - g.ridge_ratio);
  std::vector<char> farmed(static_cast<std::size_t>(g.fields * g.fields));
  for (auto& f : farmed) f = rng.uniform() < g.farm_ratio;
  s.labels.assign(n, kLowland);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i) / w, x = static_cast<int>(i) % w;
    const bool farm = farmed[static_cast<std::size_t>((y * g.fields / h) * g.fields + x * g.fields / w)];
    const double v = z[static_cast<std::int64_t>(i)];
    s.labels[i] = v < lo ? kWater : v > hi ? kRidge : (farm ? kFarmland : kLowland);
  }

  std::vector<char> speckle(n, 0);
  for (int a = 0; a < g.speckles; ++a) {
    const int size = g.speckle_min + static_cast<int>(rng.below(std::uint64_t(g.speckle_max - g.speckle_min + 1)));
    const int y0 = static_cast<int>(rng.below(std::uint64_t(h - size + 1)));
    const int x0 = static_cast<int>(rng.below(std::uint64_t(w - size + 1)));
    bool on_ridge = true;
    for (int y = y0; y < y0 + size && on_ridge; ++y)
      for (int x = x0; x < x0 + size; ++x)
        if (s.labels[static_cast<std::size_t>(y) * w + x] != kRidge) {
          on_ridge = false;
          break;
        }
    if (!on_ridge) continue;
    for (int y = y0; y < y0 + size; ++y)
      for (int x = x0; x < x0 + size; ++x) speckle[static_cast<std::size_t>(y) * w + x] = 1;
  }
  for (std::size_t i = 0; i < n; ++i)
    if (speckle[i]) s.labels[i] = kWater;

  // Texture and tint are shared by every class and frame.
  const auto tex = diamond_square(h, w, 0.7, rng);
  Rgb tint;
  for (auto& c : tint) c = rng.uniform(-0.03, 0.03);

  auto render = [&](int offset) {
    Tensor img(Shape{3, h, w});
    for (std::size_t i = 0; i < n; ++i) {
      const int y = s.labels[i];
      Rgb base = (y == kWater) ? kWaterRgb : (y == kFarmland ? crop_colour(offset) : kGrassRgb);
      for (int c = 0; c < 3; ++c) {
        const double v = base[static_cast<std::size_t>(c)] + tint[static_cast<std::size_t>(c)] +
                         g.texture * tex[i] + g.noise * rng.normal();
        img[static_cast<std::int64_t>(c * n + i)] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
    return img;
  };
  for (int t = 0; t < g.frames; ++t) s.frames.push_back(render(g.frames - 1 - t));
  s.image = s.frames.back();
  return s;
}

struct Dataset {
  int height = 0, width = 0, classes = 4, frames = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> ids;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
};

inline std::string sample_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return buf;
}

/// n scenes; scene i uses a seed derived from (cfg.seed, i).
inline Dataset generate(const GenConfig& g, int n) {
  validate(g);
  if (n < 1) throw ConfigError("sample count must be >= 1");
  Dataset d;
  d.height = g.height;
  d.width = g.width;
  d.classes = g.classes;
  d.frames = g.frames;
  d.seed = g.seed;
  for (int i = 0; i < n; ++i) {
    d.ids.push_back(sample_id(static_cast<std::size_t>(i)));
    d.samples.push_back(generate_sample(g, derive_seed(g.seed, static_cast<std::uint64_t>(i))));
  }
  return d;
}

/// Keeps the most recent T frames of every sample.
inline Dataset truncate_frames(Dataset d, int t) {
  if (t < 1 || t > d.frames)
    throw ConfigError("cannot keep " + std::to_string(t) + " of " + std::to_string(d.frames) + " frames");
  for (auto& s : d.samples) s.frames.erase(s.frames.begin(), s.frames.end() - t);
  d.frames = t;
  return d;
}

inline constexpr int kManifestVersion = 1;

inline void save_dataset(const Dataset& d, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create dataset directory " + dir.string());
  for (std::size_t i = 0; i < d.size(); ++i) {
    const Sample& s = d.samples[i];
    const fs::path sd = dir / d.ids[i];
    fs::create_directories(sd, ec);
    if (ec) throw DataError("cannot create " + sd.string());
    save_tsr(sd / "image.tsr", s.image);
    save_tsr(sd / "dem.tsr", s.dem);
    for (std::size_t t = 0; t < s.frames.size(); ++t)
      save_tsr(sd / ("frame_" + std::to_string(t) + ".tsr"), s.frames[t]);
    save_tsr_u8(sd / "labels.tsr", Shape{d.height, d.width}, s.labels);
  }
  nlohmann::ordered_json m;
  m["version"] = kManifestVersion;
  m["n"] = d.size();
  m["H"] = d.height;
  m["W"] = d.width;
  m["C"] = d.classes;
  m["T"] = d.frames;
  m["seed"] = d.seed;
  m["ids"] = d.ids;
  // Per-sample seeds make a directory self-describing for point prompts.
  std::vector<std::uint64_t> seeds;
  for (const auto& s : d.samples) seeds.push_back(s.seed);
  m["sample_seeds"] = seeds;
  const std::string text = m.dump(2) + "\n";
  io::write_file(dir / "manifest.json", std::vector<char>(text.begin(), text.end()));
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path mpath = dir / "manifest.json";
  if (!fs::exists(mpath)) throw DataError("dataset " + dir.string() + " has no manifest.json");
  const auto bytes = io::read_file(mpath);
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(mpath.string() + ": " + e.what());
  }
  Dataset d;
  try {
    d.height = m.at("H").get<int>();
    d.width = m.at("W").get<int>();
    d.classes = m.at("C").get<int>();
    d.frames = m.at("T").get<int>();
    d.seed = m.at("seed").get<std::uint64_t>();
    d.ids = m.at("ids").get<std::vector<std::string>>();
    if (m.at("n").get<std::size_t>() != d.ids.size())
      throw DataError(mpath.string() + ": n disagrees with the id list");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(mpath.string() + ": " + e.what());
  }
  std::vector<std::uint64_t> seeds;
  if (m.contains("sample_seeds")) seeds = m["sample_seeds"].get<std::vector<std::uint64_t>>();
  const Shape img{3, d.height, d.width}, dem{1, d.height, d.width}, lab{d.height, d.width};
  for (std::size_t i = 0; i < d.ids.size(); ++i) {
    const fs::path sd = dir / d.ids[i];
    Sample s;
    s.image = load_tsr(sd / "image.tsr");
    s.dem = load_tsr(sd / "dem.tsr");
    for (int t = 0; t < d.frames; ++t) s.frames.push_back(load_tsr(sd / ("frame_" + std::to_string(t) + ".tsr")));
    Shape ls;
    s.labels = load_tsr_u8(sd / "labels.tsr", &ls);
    if (s.image.shape() != img || s.dem.shape() != dem || ls != lab)
      throw DataError("sample " + d.ids[i] + " extents disagree with the manifest");
    for (const auto& f : s.frames)
      if (f.shape() != img) throw DataError("sample " + d.ids[i] + " frame extents disagree with the manifest");
    for (int y : s.labels)
      if (y >= d.classes) throw DataError("sample " + d.ids[i] + " has label " + std::to_string(y));
    s.seed = i < seeds.size() ? seeds[i] : derive_seed(d.seed, i);
    d.samples.push_back(std::move(s));
  }
  return d;
}

}  // namespace geoadapt
