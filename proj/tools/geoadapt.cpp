// Copyright 2026 The geoadapt Authors
// SPDX-License-Identifier: Apache-2.0

// geoadapt command-line tool.
//
// Exit codes: 0 success, 2 usage/config/data error, 3 numeric abort,
// 4 verification failure.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "geoadapt/geoadapt.hpp"

namespace fs = std::filesystem;
using namespace geoadapt;

namespace {

constexpr const char* kCheckpointFile = "checkpoint.tsmc";
constexpr const char* kRunFile = "run.json";
constexpr const char* kMetricsFile = "metrics.csv";

void write_text(const fs::path& path, const std::string& text) {
  io::write_file(path, std::vector<char>(text.begin(), text.end()));
}

std::string read_text(const fs::path& path) {
  const auto b = io::read_file(path);
  return std::string(b.begin(), b.end());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory " + dir.string());
}

// ---------------------------------------------------------------------------
// Configuration: defaults < config file < TASAM_SEED < flags.

struct ConfigFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs, batch_size, k, frames;
  std::optional<double> lr, weight_decay;
  std::optional<std::int64_t> max_steps;
  std::optional<std::string> strategy;
  std::vector<double> scales;
  bool no_terrain = false, no_temporal = false, no_multiscale = false;
  bool terrain = false, temporal = false, multiscale = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "TOML or JSON configuration file (run.json accepted)");
    app->add_option("--seed", seed, "Training seed");
    app->add_option("--epochs", epochs, "Number of epochs");
    app->add_option("--batch-size", batch_size, "Mini-batch size");
    app->add_option("--lr", lr, "AdamW learning rate");
    app->add_option("--weight-decay", weight_decay, "Decoupled weight decay");
    app->add_option("--max-steps", max_steps, "Stop after this many optimizer steps (0 = no limit)");
    app->add_option("--k", k, "Number of prompts");
    app->add_option("--T", frames, "Temporal window (frames)");
    app->add_option("--strategy", strategy, "Prompt strategy: temporal|learned|point|box");
    app->add_option("--scales", scales, "Multi-scale factors, one of them 1.0");
    app->add_flag("--no-terrain", no_terrain, "Disable the terrain adapter");
    app->add_flag("--no-temporal", no_temporal, "Disable temporal prompts");
    app->add_flag("--no-multiscale", no_multiscale, "Disable multi-scale fusion");
    app->add_flag("--terrain", terrain, "Enable the terrain adapter");
    app->add_flag("--temporal", temporal, "Enable temporal prompts");
    app->add_flag("--multiscale", multiscale, "Enable multi-scale fusion");
  }
};

struct LoadedConfig {
  TrainConfig train;
  Json file;  // raw file tree, empty without --config
  std::string data_dir;
};

LoadedConfig load_config(const ConfigFlags& f) {
  LoadedConfig lc;
  if (!f.config_path.empty()) {
    lc.file = load_config_file(f.config_path);
    apply_config(lc.file, lc.train, &lc.data_dir);
  }
  apply_seed_env(lc.train);
  auto& c = lc.train;
  auto& m = c.model;
  if (f.seed) c.seed = *f.seed;
  if (f.epochs) c.epochs = *f.epochs;
  if (f.batch_size) c.batch_size = *f.batch_size;
  if (f.lr) c.lr = *f.lr;
  if (f.weight_decay) c.weight_decay = *f.weight_decay;
  if (f.max_steps) c.max_steps = *f.max_steps;
  if (f.k) m.prompt.k = *f.k;
  if (f.frames) m.prompt.frames = *f.frames;
  if (f.strategy) m.prompt.strategy = parse_prompt_strategy(*f.strategy);
  if (!f.scales.empty()) m.fusion.scales = f.scales;
  auto toggle = [](bool on, bool off, bool& field, const char* name) {
    if (on && off) throw ConfigError(std::string("--") + name + " and --no-" + name + " are both given");
    if (on) field = true;
    if (off) field = false;
  };
  toggle(f.terrain, f.no_terrain, m.adapter.enabled, "terrain");
  toggle(f.temporal, f.no_temporal, m.prompt.enabled, "temporal");
  toggle(f.multiscale, f.no_multiscale, m.fusion.enabled, "multiscale");
  return lc;
}

bool file_sets(const Json& file, const char* table, const char* key) {
  return file.is_object() && file.contains(table) && file[table].is_object() && file[table].contains(key);
}

// Adopts dataset extents and class count unless the file fixes them, in
// which case they must agree.
void reconcile(LoadedConfig& lc, const Dataset& d) {
  auto& m = lc.train.model;
  auto match = [&](int& field, int actual, const char* table, const char* key, const char* what) {
    if (field == actual) return;
    if (file_sets(lc.file, table, key))
      throw DataError(std::string("config ") + table + "." + key + " = " + std::to_string(field) +
                      " does not match dataset " + what + " " + std::to_string(actual));
    field = actual;
  };
  match(m.encoder.image_h, d.height, "encoder", "image_h", "height");
  match(m.encoder.image_w, d.width, "encoder", "image_w", "width");
  match(m.decoder.classes, d.classes, "decoder", "classes", "class count");
  if (m.uses_temporal() && m.prompt.frames > d.frames)
    throw DataError("temporal window T=" + std::to_string(m.prompt.frames) + " exceeds the dataset's " +
                    std::to_string(d.frames) + " frames");
}

struct Splits {
  fs::path train, eval;
};

// DIR/train + DIR/eval when present, otherwise DIR for both.
Splits resolve_splits(const fs::path& dir) {
  if (dir.empty()) throw DataError("no dataset directory given (use --data or set 'data' in the config)");
  if (fs::exists(dir / "train" / "manifest.json")) {
    const fs::path ev = fs::exists(dir / "eval" / "manifest.json") ? dir / "eval" : dir / "train";
    return {dir / "train", ev};
  }
  if (fs::exists(dir / "manifest.json")) return {dir, dir};
  throw DataError("dataset " + dir.string() + " not found (no manifest.json)");
}

std::string variant_label(const ModelConfig& m) {
  const bool ta = m.adapter.enabled, tp = m.prompt.enabled, ms = m.fusion.enabled;
  if (ta && tp && ms) return "full";
  if (!ta && !tp && !ms) return "baseline";
  std::string s;
  if (!ta) s += (s.empty() ? "w/o " : "+") + std::string("terrain");
  if (!tp) s += (s.empty() ? "w/o " : "+") + std::string("temporal");
  if (!ms) s += (s.empty() ? "w/o " : "+") + std::string("multiscale");
  return s;
}

Json metrics_json(const Metrics& m) {
  return {{"miou", m.miou}, {"f1", m.f1}, {"precision", m.precision}, {"recall", m.recall},
          {"class_iou", m.class_iou}};
}

// Entry-by-entry comparison against a freshly built model of `cfg`.
void check_compatible(const ModelState& ckpt, const ModelConfig& cfg) {
  const ModelState ref = init_model(cfg, 0);
  auto field_of = [&](const std::string& name) -> std::string {
    if (has_prefix(name, "decoder/head")) return "decoder.classes";
    if (has_prefix(name, kFrozenPrefix)) return "encoder (dim/depth/patch)";
    if (has_prefix(name, "tp_prompt/") || name == kLearnedPrompts) return "tp_prompt (k/enabled)";
    if (has_prefix(name, "ta_adapter/")) return "ta_adapter (enabled/channels)";
    if (has_prefix(name, "ms_fusion/")) return "ms_fusion.enabled";
    return "decoder";
  };
  for (const auto& [name, e] : ref.entries()) {
    if (!ckpt.contains(name))
      throw ConfigError("checkpoint lacks '" + name + "' required by the config; mismatched field: " + field_of(name));
    if (ckpt.value(name).shape() != e.value.shape())
      throw ConfigError("checkpoint entry '" + name + "' has shape " + shape_str(ckpt.value(name).shape()) +
                        " but the config expects " + shape_str(e.value.shape()) + "; mismatched field: " +
                        field_of(name));
  }
  for (const auto& [name, e] : ckpt.entries())
    if (!ref.contains(name))
      throw ConfigError("checkpoint has '" + name + "' which the config does not use; mismatched field: " +
                        field_of(name));
}

// Config for a checkpoint: --config when given, else run.json next to it.
LoadedConfig config_for_checkpoint(const ConfigFlags& flags, const fs::path& ckpt) {
  ConfigFlags f = flags;
  if (f.config_path.empty()) {
    const fs::path run = ckpt.parent_path() / kRunFile;
    if (fs::exists(run)) f.config_path = run.string();
  }
  return load_config(f);
}

// ---------------------------------------------------------------------------

int cmd_gen(const fs::path& out, std::optional<int> n, std::optional<int> n_eval, std::uint64_t seed,
            const std::vector<int>& size, int frames, int fields) {
  GenConfig g;
  if (!size.empty()) {
    if (size.size() != 2) throw ConfigError("--size takes two values: H W");
    g.height = size[0];
    g.width = size[1];
  }
  g.frames = frames;
  g.fields = fields;
  const int nt = n.value_or(128);
  const int ne = n_eval.value_or(n ? std::max(1, nt / 4) : 32);
  if (nt < 1 || ne < 0) throw ConfigError("sample counts must be positive");
  g.seed = seed;
  validate(g);
  const Dataset train = generate(g, nt);
  g.seed = derive_seed(seed, 0xe7a1);
  const Dataset eval = generate(g, ne);
  make_dir(out);
  save_dataset(train, out / "train");
  if (ne > 0) save_dataset(eval, out / "eval");
  std::cout << "wrote " << nt << " train and " << ne << " eval samples (" << g.height << "x" << g.width << ", T="
            << g.frames << ") to " << out.string() << "\n";
  return 0;
}

struct Hooks {
  bool unfreeze = false;
  std::string inject_nan;  // parameter name whose first value becomes NaN
};

int cmd_train(const ConfigFlags& flags, const std::string& data_flag, const fs::path& out, const Hooks& hooks) {
  LoadedConfig lc = load_config(flags);
  if (!data_flag.empty()) lc.data_dir = data_flag;
  const Splits splits = resolve_splits(lc.data_dir);
  lc.data_dir = fs::absolute(lc.data_dir).lexically_normal().string();
  const Dataset train_set = load_dataset(splits.train);
  const Dataset eval_set = splits.eval == splits.train ? train_set : load_dataset(splits.eval);
  reconcile(lc, train_set);
  if (eval_set.height != train_set.height || eval_set.width != train_set.width ||
      eval_set.classes != train_set.classes)
    throw DataError("train and eval splits disagree in extents or class count");
  TrainConfig& cfg = lc.train;
  cfg.unfreeze_encoder = hooks.unfreeze;
  validate(cfg);
  make_dir(out);

  const ModelState frozen = init_model(cfg.model, cfg.seed);
  std::optional<FeatureCache> train_cache;
  if (!cfg.unfreeze_encoder) train_cache = build_cache(frozen, cfg.model, train_set);
  TrainHooks th;
  const std::int64_t per_epoch = (std::int64_t(train_set.size()) + cfg.batch_size - 1) / cfg.batch_size;
  double epoch_sum = 0;
  th.on_step = [&](std::int64_t step, double loss) {
    epoch_sum += loss;
    if (step % per_epoch == 0) {
      std::printf("epoch %3lld  mean batch loss %.6f\n", static_cast<long long>(step / per_epoch),
                  epoch_sum / double(per_epoch));
      std::fflush(stdout);
      epoch_sum = 0;
    }
  };
  if (!hooks.inject_nan.empty()) {
    th.edit_initial = [&](ModelState& s) {
      s.value(hooks.inject_nan)[0] = std::numeric_limits<float>::quiet_NaN();
    };
  }
  RunRecord rec = train(cfg, train_set, train_cache ? &*train_cache : nullptr, nullptr, th);
  const FeatureCache eval_cache = build_cache(rec.state, cfg.model, eval_set);
  const Metrics m = summarize_eval(rec.state, cfg.model, eval_cache);
  rec.metrics = m;

  save_checkpoint(out / kCheckpointFile, rec.state);
  const auto flops = count_flops(cfg.model);
  std::int64_t total_flops = 0;
  for (auto f : flops) total_flops += f;
  const std::string label = variant_label(cfg.model);
  write_text(out / kMetricsFile, csv_header() + "\n" + csv_row(label, m, rec.trainable_params, total_flops) + "\n");

  Json run;
  run["config"] = config_to_json(cfg, lc.data_dir);
  run["variant"] = label;
  run["train_split"] = fs::absolute(splits.train).lexically_normal().string();
  run["eval_split"] = fs::absolute(splits.eval).lexically_normal().string();
  run["epoch_loss"] = rec.epoch_loss;
  run["step_loss"] = rec.step_loss;
  run["metrics"] = metrics_json(m);
  run["trainable_params"] = rec.trainable_params;
  run["frozen_intact"] = rec.frozen_intact;
  run["wall_seconds"] = rec.wall_seconds;
  run["checkpoint"] = kCheckpointFile;
  write_text(out / kRunFile, run.dump(2) + "\n");

  std::printf("%s: mIoU %.4f  F1 %.4f  P %.4f  R %.4f  (%lld trainable params, %.1fs)\n", label.c_str(), m.miou,
              m.f1, m.precision, m.recall, static_cast<long long>(rec.trainable_params), rec.wall_seconds);
  std::printf("freeze_check: %s\n", rec.frozen_intact ? "pass" : "FAIL (encoder weights changed)");
  return 0;
}

int cmd_eval(const ConfigFlags& flags, const fs::path& ckpt_path, const std::string& data_flag,
             const std::string& split, const std::string& out_flag, const std::string& dump_pred) {
  LoadedConfig lc = config_for_checkpoint(flags, ckpt_path);
  if (!data_flag.empty()) lc.data_dir = data_flag;
  const Splits splits = resolve_splits(lc.data_dir);
  if (split != "eval" && split != "train") throw ConfigError("--split must be train or eval");
  const Dataset data = load_dataset(split == "train" ? splits.train : splits.eval);
  reconcile(lc, data);
  validate(lc.train.model);
  const ModelState state = load_checkpoint(ckpt_path);
  check_compatible(state, lc.train.model);
  const FeatureCache cache = build_cache(state, lc.train.model, data);
  std::vector<std::vector<int>> preds;
  const ConfusionMatrix cm = evaluate(state, lc.train.model, cache, dump_pred.empty() ? nullptr : &preds);
  const Metrics m = summarize(cm);
  const fs::path out = out_flag.empty() ? ckpt_path.parent_path() / "eval_metrics.csv" : fs::path(out_flag);
  if (!out.parent_path().empty()) make_dir(out.parent_path());
  std::int64_t total_flops = 0;
  for (auto f : count_flops(lc.train.model)) total_flops += f;
  write_text(out, csv_header() + "\n" +
                      csv_row(variant_label(lc.train.model), m, state.count(false), total_flops) + "\n");
  if (!dump_pred.empty()) {
    make_dir(dump_pred);
    for (std::size_t i = 0; i < preds.size(); ++i)
      save_tsr_u8(fs::path(dump_pred) / (data.ids[i] + ".tsr"), Shape{data.height, data.width}, preds[i]);
  }
  std::printf("mIoU %.4f  F1 %.4f  P %.4f  R %.4f  pixel acc %.4f\n", m.miou, m.f1, m.precision, m.recall,
              pixel_accuracy(cm));
  for (std::size_t k = 0; k < m.class_iou.size(); ++k) std::printf("  class %zu IoU %.4f\n", k, m.class_iou[k]);
  return 0;
}

std::vector<std::uint64_t> parse_seeds(const std::vector<std::uint64_t>& s) {
  return s.empty() ? std::vector<std::uint64_t>{0} : s;
}

int run_table(const ConfigFlags& flags, const std::string& data_flag, const fs::path& out,
              const std::vector<std::uint64_t>& seed_list, const std::string& name, const std::string& title,
              const std::function<std::vector<Variant>(const TrainConfig&)>& make) {
  LoadedConfig lc = load_config(flags);
  if (!data_flag.empty()) lc.data_dir = data_flag;
  const Splits splits = resolve_splits(lc.data_dir);
  const Dataset train_set = load_dataset(splits.train);
  const Dataset eval_set = load_dataset(splits.eval);
  reconcile(lc, train_set);
  const auto variants = make(lc.train);
  for (const auto& v : variants) {
    validate(v.config);
    if (v.config.model.uses_temporal() && v.config.model.prompt.frames > train_set.frames)
      throw DataError(v.label + ": temporal window exceeds the dataset's " + std::to_string(train_set.frames) +
                      " frames");
  }
  make_dir(out);
  ModelConfig widest = lc.train.model;
  widest.fusion.enabled = true;
  const CachedSplits data = cache_splits(widest, train_set, eval_set);
  const auto seeds = parse_seeds(seed_list);
  const auto rows = run_variants(variants, seeds, data, nullptr,
                                 [](const std::string& label, std::uint64_t seed, const RunRecord& r) {
                                   std::printf("  %-16s seed %llu  mIoU %.4f  (%.1fs)\n", label.c_str(),
                                               static_cast<unsigned long long>(seed), r.metrics->miou,
                                               r.wall_seconds);
                                   std::fflush(stdout);
                                 });
  write_text(out / (name + ".csv"), results_csv(rows));
  write_text(out / (name + "_seeds.csv"), per_seed_csv(rows));
  std::cout << results_table(title, rows);
  return 0;
}

int cmd_gradcheck(const std::string& module, int coords, std::uint64_t seed, std::optional<double> tol,
                  const std::string& fault) {
  std::vector<std::string> modules;
  if (module == "all") {
    modules = gradcheck_modules();
  } else {
    modules = {module};
  }
  std::optional<testing::ScopedFault> scoped;
  if (!fault.empty()) {
    const auto colon = fault.find(':');
    const std::string op = fault.substr(0, colon);
    const double factor = colon == std::string::npos ? 1.5 : std::stod(fault.substr(colon + 1));
    scoped.emplace(op, factor);
  }
  const std::map<std::string, std::string> groups{
      {"ta", "ta_adapter"}, {"tp", "tp_prompt"}, {"ms", "ms_fusion"}, {"dec", "decoder"}, {"e2e", "end-to-end"}};
  bool ok = true;
  for (const auto& m : modules) {
    GradcheckOptions opt;
    opt.seed = seed;
    opt.max_coords = coords;
    opt.tol = tol.value_or(default_tolerance(m));
    const auto t0 = std::chrono::steady_clock::now();
    const GradcheckReport r = run_gradcheck(m, opt);
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%-4s %-11s max rel. error %.3e  tol %.0e  %s  (%zu coords, worst %s, %.1fs)\n", m.c_str(),
                groups.count(m) ? groups.at(m).c_str() : "?", r.max_rel_error, r.tol, r.pass() ? "PASS" : "FAIL",
                r.errors.size(), r.worst_param.c_str(), s);
    ok = ok && r.pass();
  }
  if (!ok) throw ReproducibilityError("gradient check failed");
  return 0;
}

int cmd_info(const ConfigFlags& flags, bool no_time, const std::string& csv) {
  LoadedConfig lc = load_config(flags);
  const ModelConfig& cfg = lc.train.model;
  validate(cfg);
  std::optional<Sample> sample;
  if (!no_time) {
    GenConfig g;
    g.height = cfg.encoder.image_h;
    g.width = cfg.encoder.image_w;
    g.patch = cfg.encoder.patch;
    g.frames = std::max(g.frames, cfg.prompt.frames);
    sample = generate_sample(g, derive_seed(lc.train.seed, 0x1f0));
  }
  const EfficiencyReport r = efficiency_report(cfg, lc.train.seed, sample ? &*sample : nullptr);
  std::printf("%-12s %-9s %12s %16s %12s\n", "module", "group", "params", "FLOPs/image", "ms/image");
  std::string out = "module,group,params,flops,ms\n";
  for (const auto& m : r.modules) {
    const std::string ms = r.timed ? fmt(m.ms, 3) : "";
    std::printf("%-12s %-9s %12lld %16lld %12s\n", m.module.c_str(), m.frozen ? "frozen" : "trainable",
                static_cast<long long>(m.params), static_cast<long long>(m.flops), ms.c_str());
    out += m.module + "," + (m.frozen ? "frozen" : "trainable") + "," + std::to_string(m.params) + "," +
           std::to_string(m.flops) + "," + ms + "\n";
  }
  const std::string tms = r.timed ? fmt(r.total_ms(), 3) : "";
  std::printf("%-12s %-9s %12lld %16lld %12s\n", "total", "", static_cast<long long>(r.total_params()),
              static_cast<long long>(r.total_flops()), tms.c_str());
  out += "total,," + std::to_string(r.total_params()) + "," + std::to_string(r.total_flops()) + "," + tms + "\n";
  std::printf("frozen %lld  trainable %lld  added modules %lld (%.2f%% of the frozen encoder)\n",
              static_cast<long long>(r.frozen_params()), static_cast<long long>(r.trainable_params()),
              static_cast<long long>(added_module_params(r)),
              100.0 * double(added_module_params(r)) / double(std::max<std::int64_t>(1, r.frozen_params())));
  if (r.timed) std::printf("timing: median of group means over %d timed runs\n", timed_runs());
  if (!csv.empty()) write_text(csv, out);
  return 0;
}

// Parses a results CSV (label + miou columns) for sweep plots.
std::vector<std::pair<std::string, double>> read_results_csv(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::string line;
  std::getline(in, line);
  std::vector<std::pair<std::string, double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos) throw FormatError(path.string() + ": malformed row '" + line + "'");
    rows.emplace_back(line.substr(0, c1), std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
  }
  return rows;
}

int cmd_plot(const fs::path& run_dir, const std::string& kind, const std::string& out_flag, int index) {
  if (!fs::is_directory(run_dir)) throw DataError("run directory " + run_dir.string() + " does not exist");
  const fs::path out = out_flag.empty() ? run_dir : fs::path(out_flag);
  make_dir(out);
  if (kind == "loss") {
    const fs::path rp = run_dir / kRunFile;
    if (!fs::exists(rp)) throw DataError(rp.string() + " not found");
    const Json run = Json::parse(read_text(rp));
    const auto steps = run.at("step_loss").get<std::vector<double>>();
    const auto epochs = run.at("epoch_loss").get<std::vector<double>>();
    Series s1{"batch", {}, steps}, s2{"epoch mean", {}, epochs};
    for (std::size_t i = 0; i < steps.size(); ++i) s1.x.push_back(double(i + 1));
    const double per = epochs.empty() ? 1.0 : double(steps.size()) / double(epochs.size());
    for (std::size_t i = 0; i < epochs.size(); ++i) s2.x.push_back(per * double(i + 1));
    write_text(out / "loss.svg", svg_line_plot("Training loss", "step", "cross-entropy", {s1, s2}));
    std::cout << "wrote " << (out / "loss.svg").string() << "\n";
    return 0;
  }
  if (kind == "sweep") {
    int written = 0;
    for (const char* what : {"prompts", "temporal"}) {
      const fs::path csv = run_dir / ("sweep_" + std::string(what) + ".csv");
      if (!fs::exists(csv)) continue;
      Series s{"mIoU", {}, {}};
      for (const auto& [label, miou] : read_results_csv(csv)) {
        const auto eq = label.find('=');
        s.x.push_back(eq == std::string::npos ? double(s.x.size() + 1) : std::stod(label.substr(eq + 1)));
        s.y.push_back(miou);
      }
      const std::string x = std::string(what) == "prompts" ? "number of prompts k" : "temporal window T";
      const fs::path svg = out / ("sweep_" + std::string(what) + ".svg");
      write_text(svg, svg_line_plot("mIoU vs " + x, x, "mIoU", {s}));
      std::cout << "wrote " << svg.string() << "\n";
      ++written;
    }
    if (!written) throw DataError("no sweep_prompts.csv or sweep_temporal.csv in " + run_dir.string());
    return 0;
  }
  if (kind == "heatmap") {
    const fs::path ckpt = run_dir / kCheckpointFile;
    if (!fs::exists(ckpt) || !fs::exists(run_dir / kRunFile))
      throw DataError("heatmaps need " + std::string(kCheckpointFile) + " and run.json in " + run_dir.string());
    ConfigFlags f;
    f.config_path = (run_dir / kRunFile).string();
    LoadedConfig lc = load_config(f);
    const Splits splits = resolve_splits(lc.data_dir);
    const Dataset data = load_dataset(splits.eval);
    reconcile(lc, data);
    const ModelState state = load_checkpoint(ckpt);
    check_compatible(state, lc.train.model);
    if (index < 0 || std::size_t(index) >= data.size())
      throw ConfigError("--index out of range (dataset has " + std::to_string(data.size()) + " samples)");
    const auto prepared = prepare_sample(state, lc.train.model, data.samples[std::size_t(index)]);
    const Heatmaps h = heatmaps(state, lc.train.model, prepared);
    const std::string id = data.ids[std::size_t(index)];
    if (h.gate) {
      write_text(out / ("gate_" + id + ".ppm"), ppm_heatmap(*h.gate));
      const auto& lab = data.samples[std::size_t(index)].labels;
      std::printf("gate mean: water %.4f  lowland/ridge %.4f\n", masked_mean(*h.gate, lab, {kWater}),
                  masked_mean(*h.gate, lab, {kLowland, kRidge}));
    }
    if (h.attention) write_text(out / ("attention_" + id + ".ppm"), ppm_heatmap(min_max_normalize(*h.attention)));
    if (!h.gate && !h.attention) throw ConfigError("model has neither a terrain gate nor prompts to visualise");
    std::cout << "wrote heatmaps for sample " << id << " to " << out.string() << "\n";
    return 0;
  }
  throw ConfigError("--kind must be loss, heatmap or sweep");
}

int cmd_verify(const ConfigFlags& flags, const std::string& run_dir, const std::string& ckpt_flag,
               const std::string& data_flag) {
  int checks = 0;
  bool ok = true;
  fs::path ckpt = ckpt_flag;
  if (!run_dir.empty() && ckpt.empty()) ckpt = fs::path(run_dir) / kCheckpointFile;
  if (!ckpt.empty()) {
    const LoadedConfig lc = config_for_checkpoint(flags, ckpt);
    const ModelState state = load_checkpoint(ckpt);
    // The encoder is a function of encoder.seed alone.
    const ModelState ref = init_model(lc.train.model, lc.train.seed).frozen_snapshot();
    bool intact = true;
    std::string first;
    for (const auto& [name, e] : ref.entries()) {
      const bool same = state.contains(name) && state.value(name).shape() == e.value.shape() &&
                        std::memcmp(state.value(name).data(), e.value.data(), sizeof(float) * e.value.size()) == 0;
      if (!same && first.empty()) first = name;
      intact = intact && same;
    }
    std::printf("freeze_check: %s%s\n", intact ? "pass" : "FAIL, first changed entry ", first.c_str());
    ok = ok && intact;
    ++checks;
  }
  if (!data_flag.empty()) {
    const Splits splits = resolve_splits(data_flag);
    for (const fs::path& p : {splits.train, splits.eval}) {
      const Dataset d = load_dataset(p);
      const fs::path tmp = fs::temp_directory_path() /
                           ("geoadapt_verify_" + std::to_string(std::hash<std::string>{}(p.string())));
      fs::remove_all(tmp);
      save_dataset(d, tmp);
      bool same = true;
      for (const auto& entry : fs::recursive_directory_iterator(p)) {
        if (!entry.is_regular_file()) continue;
        const fs::path rel = fs::relative(entry.path(), p);
        if (!fs::exists(tmp / rel) || io::read_file(entry.path()) != io::read_file(tmp / rel)) {
          same = false;
          std::printf("round-trip differs: %s\n", rel.string().c_str());
          break;
        }
      }
      fs::remove_all(tmp);
      std::printf("dataset round-trip %s: %s\n", p.string().c_str(), same ? "pass" : "FAIL");
      ok = ok && same;
      ++checks;
      if (splits.eval == splits.train) break;
    }
  }
  if (!checks) throw ConfigError("verify needs --run, --ckpt or --data");
  if (!ok) throw ReproducibilityError("verification failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geoadapt: terrain-, time- and scale-aware adaptation of a frozen segmentation backbone"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic dataset (DIR/train and DIR/eval)");
  std::string gen_out;
  std::optional<int> gen_n, gen_n_eval;
  std::uint64_t gen_seed = 0;
  std::vector<int> gen_size;
  int gen_frames = 5, gen_fields = GenConfig{}.fields;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--n", gen_n, "Training samples (default 128)");
  gen->add_option("--n-eval", gen_n_eval, "Evaluation samples (default 32, or n/4 with --n)");
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--size", gen_size, "Image extents H W")->expected(2);
  gen->add_option("--T", gen_frames, "Frames per sample");
  gen->add_option("--fields", gen_fields, "Farmland fields per side");

  // train
  auto* tr = app.add_subcommand("train", "Train the adaptation modules on a dataset");
  ConfigFlags tr_flags;
  tr_flags.attach(tr);
  std::string tr_data, tr_out;
  Hooks hooks;
  tr->add_option("--data", tr_data, "Dataset directory");
  tr->add_option("--out", tr_out, "Run output directory")->required();
  // Test hooks, not part of the documented interface.
  tr->add_flag("--unfreeze-encoder", hooks.unfreeze)->group("");
  tr->add_option("--inject-nan", hooks.inject_nan)->group("");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ConfigFlags ev_flags;
  ev_flags.attach(ev);
  std::string ev_ckpt, ev_data, ev_split = "eval", ev_out, ev_dump;
  ev->add_option("--ckpt", ev_ckpt, "Checkpoint file")->required();
  ev->add_option("--data", ev_data, "Dataset directory (defaults to the run's)");
  ev->add_option("--split", ev_split, "train or eval");
  ev->add_option("--out", ev_out, "Metrics CSV path (default next to the checkpoint)");
  ev->add_option("--dump-pred", ev_dump, "Write per-sample label maps as TSR files into this directory");

  // ablate
  auto* ab = app.add_subcommand("ablate", "Five-row module ablation");
  ConfigFlags ab_flags;
  ab_flags.attach(ab);
  std::string ab_data, ab_out;
  std::vector<std::uint64_t> ab_seeds;
  ab->add_option("--data", ab_data, "Dataset directory");
  ab->add_option("--out", ab_out, "Output directory")->required();
  ab->add_option("--seeds", ab_seeds, "Training seeds (default 0)")->delimiter(',');

  // sweep
  auto* sw = app.add_subcommand("sweep", "Prompt-count, temporal-window or prompt-strategy sweep");
  ConfigFlags sw_flags;
  sw_flags.attach(sw);
  std::string sw_data, sw_out, sw_what;
  std::vector<std::uint64_t> sw_seeds;
  std::vector<int> sw_values;
  sw->add_option("--what", sw_what, "prompts|temporal|strategy")->required();
  sw->add_option("--data", sw_data, "Dataset directory");
  sw->add_option("--out", sw_out, "Output directory")->required();
  sw->add_option("--seeds", sw_seeds, "Training seeds (default 0)")->delimiter(',');
  sw->add_option("--values", sw_values, "Override the swept values")->delimiter(',');

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check");
  std::string gc_module = "all", gc_fault;
  int gc_coords = 8;
  std::uint64_t gc_seed = 0;
  std::optional<double> gc_tol;
  gc->add_option("--module", gc_module, "all|ta|tp|ms|dec|e2e");
  gc->add_option("--coords", gc_coords, "Coordinates per parameter tensor (0 = all)");
  gc->add_option("--seed", gc_seed, "Seed for inputs and coordinate sampling");
  gc->add_option("--tol", gc_tol, "Override the relative-error tolerance");
  gc->add_option("--fault", gc_fault)->group("");  // test hook: OP[:factor]

  // info
  auto* in = app.add_subcommand("info", "Parameter, FLOP and latency table");
  ConfigFlags in_flags;
  in_flags.attach(in);
  bool in_no_time = false;
  std::string in_csv;
  in->add_flag("--no-time", in_no_time, "Skip latency measurement");
  in->add_option("--csv", in_csv, "Also write the table as CSV");

  // plot
  auto* pl = app.add_subcommand("plot", "Loss curves, sweep plots (SVG) and heatmaps (PPM)");
  std::string pl_run, pl_kind, pl_out;
  int pl_index = 0;
  pl->add_option("--run", pl_run, "Run or sweep output directory")->required();
  pl->add_option("--kind", pl_kind, "loss|heatmap|sweep")->required();
  pl->add_option("--out", pl_out, "Output directory (default: the run directory)");
  pl->add_option("--index", pl_index, "Evaluation sample for heatmaps");

  // verify
  auto* vf = app.add_subcommand("verify", "Freeze check of a checkpoint and dataset round-trip check");
  ConfigFlags vf_flags;
  vf_flags.attach(vf);
  std::string vf_run, vf_ckpt, vf_data;
  vf->add_option("--run", vf_run, "Run directory");
  vf->add_option("--ckpt", vf_ckpt, "Checkpoint file");
  vf->add_option("--data", vf_data, "Dataset directory to round-trip");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen(gen_out, gen_n, gen_n_eval, gen_seed, gen_size, gen_frames, gen_fields);
    if (tr->parsed()) return cmd_train(tr_flags, tr_data, tr_out, hooks);
    if (ev->parsed()) return cmd_eval(ev_flags, ev_ckpt, ev_data, ev_split, ev_out, ev_dump);
    if (ab->parsed())
      return run_table(ab_flags, ab_data, ab_out, ab_seeds, "ablation", "Module ablation",
                       [](const TrainConfig& c) { return ablation_variants(c); });
    if (sw->parsed()) {
      if (sw_what == "prompts") {
        const auto ks = sw_values.empty() ? default_prompt_counts() : sw_values;
        return run_table(sw_flags, sw_data, sw_out, sw_seeds, "sweep_prompts", "Prompt count",
                         [&](const TrainConfig& c) { return prompt_sweep_variants(c, ks); });
      }
      if (sw_what == "temporal") {
        const auto ts = sw_values.empty() ? default_windows() : sw_values;
        return run_table(sw_flags, sw_data, sw_out, sw_seeds, "sweep_temporal", "Temporal window",
                         [&](const TrainConfig& c) { return temporal_sweep_variants(c, ts); });
      }
      if (sw_what == "strategy")
        return run_table(sw_flags, sw_data, sw_out, sw_seeds, "sweep_strategy", "Prompt strategy",
                         [](const TrainConfig& c) { return strategy_variants(c); });
      throw ConfigError("--what must be prompts, temporal or strategy");
    }
    if (gc->parsed()) return cmd_gradcheck(gc_module, gc_coords, gc_seed, gc_tol, gc_fault);
    if (in->parsed()) return cmd_info(in_flags, in_no_time, in_csv);
    if (pl->parsed()) return cmd_plot(pl_run, pl_kind, pl_out, pl_index);
    if (vf->parsed()) return cmd_verify(vf_flags, vf_run, vf_ckpt, vf_data);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: malformed JSON: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
