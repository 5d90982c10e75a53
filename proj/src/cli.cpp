// Copyright 2026 The MemeFier-cpp Authors.
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


#include "memefier/cli.hpp"

#include "memefier/checkpoint.hpp"
#include "memefier/config_file.hpp"
#include "memefier/dataset.hpp"
#include "memefier/digest.hpp"
#include "memefier/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

namespace memefier::cli {
namespace {

namespace fs = std::filesystem;

class CliError : public std::runtime_error {
 public:
  CliError(int code, const std::string& message) : std::runtime_error(message), code_(code) {}
  int code() const { return code_; }

 private:
  int code_;
};

// Everything a subcommand may read from the config file.
struct Settings {
  ModelConfig model;
  TrainConfig train;
  SyntheticOptions data;
  std::optional<std::uint64_t> seed;

  KeyValues to_key_values() const {
    KeyValues kv = memefier::to_key_values(model);
    for (auto& [k, v] : memefier::to_key_values(train)) kv[k] = v;
    kv["data.n"] = std::to_string(data.n);
    kv["data.d"] = std::to_string(data.d);
    kv["data.n_g"] = std::to_string(data.n_g);
    kv["data.n_x"] = std::to_string(data.n_x);
    kv["data.seed"] = std::to_string(data.seed);
    kv["data.noise"] = format_double(data.noise);
    kv["data.min_cosine"] = format_double(data.min_cosine);
    kv["data.max_cosine"] = format_double(data.max_cosine);
    kv["data.planted_attribute"] = std::to_string(data.planted_attribute);
    kv["data.planted_code"] = std::to_string(data.planted_code);
    kv["data.task"] = data.task;
    kv["data.train_fraction"] = format_double(data.train_fraction);
    kv["data.val_fraction"] = format_double(data.val_fraction);
    if (seed) kv["seed"] = std::to_string(*seed);
    return kv;
  }
};

void apply_data_keys(SyntheticOptions& d, const KeyValues& kv) {
  for (const auto& [key, value] : kv) {
    if (key.rfind("data.", 0) != 0) continue;
    const std::string name = key.substr(5);
    if (name == "n") d.n = parse_int(key, value);
    else if (name == "d") d.d = parse_int(key, value);
    else if (name == "n_g") d.n_g = parse_int(key, value);
    else if (name == "n_x") d.n_x = parse_int(key, value);
    else if (name == "seed") d.seed = parse_u64(key, value);
    else if (name == "noise") d.noise = static_cast<float>(parse_double(key, value));
    else if (name == "min_cosine") d.min_cosine = static_cast<float>(parse_double(key, value));
    else if (name == "max_cosine") d.max_cosine = static_cast<float>(parse_double(key, value));
    else if (name == "planted_attribute") d.planted_attribute = parse_int(key, value);
    else if (name == "planted_code") d.planted_code = parse_int(key, value);
    else if (name == "task") d.task = value;
    else if (name == "train_fraction") d.train_fraction = parse_double(key, value);
    else if (name == "val_fraction") d.val_fraction = parse_double(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
  }
}

void validate_data(const SyntheticOptions& d) {
  if (d.n < 4) throw ConfigError("data.n must be >= 4");
  if (d.d < 4) throw ConfigError("data.d must be >= 4");
  if (d.n_g < 1 || d.n_x < 1) throw ConfigError("data.n_g and data.n_x must be >= 1");
  if (!(d.noise >= 0)) throw ConfigError("data.noise must be >= 0");
  if (!(d.min_cosine > 0 && d.min_cosine <= d.max_cosine && d.max_cosine < 1)) {
    throw ConfigError("data cosine range must satisfy 0 < min_cosine <= max_cosine < 1");
  }
  if (d.planted_attribute < 0 || d.planted_attribute >= kAttributesPerPerson) {
    throw ConfigError("data.planted_attribute must be 0, 1 or 2");
  }
  if (!(d.train_fraction > 0 && d.val_fraction > 0 && d.train_fraction + d.val_fraction <= 1)) {
    throw ConfigError("data.train_fraction and data.val_fraction must be positive and sum to <= 1");
  }
  if (d.task.empty()) throw ConfigError("data.task must not be empty");
}

Settings load_settings(const std::string& config_path, std::optional<std::uint64_t> seed_flag) {
  KeyValues kv;
  if (!config_path.empty()) {
    if (!fs::exists(config_path)) throw CliError(kMissingFile, "config file not found: " + config_path);
    kv = read_key_values(config_path);
  }
  for (const auto& [key, value] : kv) {
    const bool known = key == "seed" || key.rfind("model.", 0) == 0 || key.rfind("train.", 0) == 0 ||
                       key.rfind("data.", 0) == 0;
    if (!known) throw ConfigError("unknown config key '" + key + "'");
  }
  Settings s;
  apply_key_values(s.model, kv);
  apply_key_values(s.train, kv);
  apply_data_keys(s.data, kv);
  if (auto it = kv.find("seed"); it != kv.end()) s.seed = parse_u64("seed", it->second);
  if (seed_flag) s.seed = seed_flag;
  if (s.seed) {
    s.model.seed = *s.seed;
    s.train.seed = *s.seed;
    s.data.seed = *s.seed;
  }
  s.model.validate();
  s.train.validate();
  validate_data(s.data);
  return s;
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw CliError(kUsageError, std::string("missing --") + what);
  if (!fs::exists(path)) throw CliError(kMissingFile, std::string(what) + " not found: " + path);
}

// Creates `dir` and refuses to replace any of `outputs` unless forced.
void prepare_output(const fs::path& dir, std::initializer_list<const char*> outputs, bool force) {
  if (dir.empty()) throw CliError(kUsageError, "missing --out");
  if (fs::exists(dir) && !fs::is_directory(dir)) {
    throw CliError(kRefuseOverwrite, "output path exists and is not a directory: " + dir.string());
  }
  for (const char* name : outputs) {
    if (fs::exists(dir / name) && !force) {
      throw CliError(kRefuseOverwrite, "refusing to overwrite " + (dir / name).string() + " (use --force)");
    }
  }
  fs::create_directories(dir);
}

DatasetManifest load_manifest(const std::string& path) {
  require_file(path, "manifest");
  try {
    return read_manifest(fs::path(path));
  } catch (const ManifestError& e) {
    throw CliError(kInvalidInput, path + ": " + e.what());
  }
}

MemeFier<float> load_checkpoint(const std::string& path) {
  require_file(path, "checkpoint");
  try {
    return read_checkpoint(fs::path(path));
  } catch (const CheckpointError& e) {
    throw CliError(kInvalidInput, path + ": " + e.what());
  } catch (const ConfigError& e) {
    throw CliError(kInvalidInput, path + ": " + e.what());
  }
}

void check_compatible(const MemeFier<float>& model, const DatasetManifest& m) {
  const auto& c = model.config();
  if (c.d_img != m.d_img || c.d_txt != m.d_txt || c.attribute_vocab_sizes != m.attribute_vocab_sizes ||
      c.caption_vocab_size != static_cast<int>(m.caption_vocab.size())) {
    throw CliError(kInvalidInput, "checkpoint dimensions do not match the manifest");
  }
}

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err, true);
  auto logger = std::make_shared<spdlog::logger>("memefier", sink);
  logger->set_pattern("[%l] %v");
  spdlog::level::level_enum level = spdlog::level::info;
  if (const char* env = std::getenv("MEMEFIER_LOG"); env != nullptr && *env != '\0') {
    level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only honour real level names.
    if (level == spdlog::level::off && std::string(env) != "off") level = spdlog::level::info;
  }
  logger->set_level(level);
  return logger;
}

EpochCallback epoch_logger(const std::shared_ptr<spdlog::logger>& log, int epochs, std::string prefix = {}) {
  return [log, epochs, prefix](const EpochRecord& r) {
    log->info("{}epoch {}/{} lr={} train.loss={:.5f} val.loss={:.5f} val.score={:.4f}", prefix, r.epoch, epochs,
              r.lr, r.train.total, r.val.total, r.val_metrics.score());
  };
}

struct Options {
  std::string config;
  std::string out;
  std::string in;
  std::string manifest;
  std::string checkpoint;
  std::string split = "test";
  std::string ids;
  std::optional<std::uint64_t> seed;
  std::optional<int> n, d, n_g, n_x;
  int limit = 0;
  bool force = false;
};

int cmd_synth(const Options& o, std::ostream& out, spdlog::logger& log) {
  Settings s = load_settings(o.config, o.seed);
  if (o.n) s.data.n = *o.n;
  if (o.d) s.data.d = *o.d;
  if (o.n_g) s.data.n_g = *o.n_g;
  if (o.n_x) s.data.n_x = *o.n_x;
  validate_data(s.data);
  const fs::path dir(o.out);
  prepare_output(dir, {"manifest.txt", "config.cfg"}, o.force);
  const auto manifest = generate_synthetic(s.data);
  write_manifest(manifest, dir / "manifest.txt");
  write_key_values(s.to_key_values(), dir / "config.cfg");
  log.info("wrote {} samples to {}", manifest.samples.size(), (dir / "manifest.txt").string());
  out << (dir / "manifest.txt").string() << "  sha256 " << file_sha256(dir / "manifest.txt") << '\n';
  return kOk;
}

int cmd_train(const Options& o, std::ostream& out, spdlog::logger& log, const std::shared_ptr<spdlog::logger>& lp) {
  Settings s = load_settings(o.config, o.seed);
  const auto manifest = load_manifest(o.manifest);
  const fs::path dir(o.out);
  prepare_output(dir, {"final.ckpt", "best.ckpt", "history.txt", "metrics.best.txt", "config.cfg"}, o.force);
  s.model.adopt_manifest(manifest);
  write_key_values(s.to_key_values(), dir / "config.cfg");
  log.info("training on {} samples, {} epochs", manifest.indices(Split::kTrain).size(), s.train.epochs);
  const auto result = train(s.model, s.train, manifest, epoch_logger(lp, s.train.epochs));
  write_checkpoint(result.final_model, dir / "final.ckpt");
  write_checkpoint(result.best_model, dir / "best.ckpt");
  write_file_atomic(dir / "history.txt", format_history(result.history));
  MetricsReport best = result.history.at(static_cast<std::size_t>(result.best_epoch - 1)).val_metrics;
  best.provenance["split"] = "val";
  best.provenance["epoch"] = std::to_string(result.best_epoch);
  best.provenance["seed"] = std::to_string(s.train.seed);
  best.provenance["manifest"] = manifest_digest(manifest);
  best.provenance["checkpoint"] = file_sha256(dir / "best.ckpt");
  write_key_values(best.to_key_values(), dir / "metrics.best.txt");
  out << "best epoch " << result.best_epoch << " (val score " << format_double(result.best_score) << ")\n"
      << best.to_table();
  return kOk;
}

int cmd_eval(const Options& o, std::ostream& out, spdlog::logger& log) {
  Split split;
  try {
    split = parse_split(o.split);
  } catch (const std::exception&) {
    throw CliError(kUsageError, "--split must be train, val or test");
  }
  const auto model = load_checkpoint(o.checkpoint);
  const auto manifest = load_manifest(o.manifest);
  check_compatible(model, manifest);
  const auto idx = manifest.indices(split);
  if (idx.empty()) throw CliError(kInvalidInput, "manifest has no " + o.split + " samples");
  const fs::path dir(o.out);
  const std::string file = "metrics." + o.split + ".txt";
  prepare_output(dir, {file.c_str()}, o.force);
  auto ev = evaluate(model, manifest, idx);
  ev.metrics.provenance["split"] = o.split;
  ev.metrics.provenance["seed"] = std::to_string(model.config().seed);
  ev.metrics.provenance["manifest"] = manifest_digest(manifest);
  ev.metrics.provenance["checkpoint"] = file_sha256(o.checkpoint);
  ev.metrics.provenance["loss"] = format_double(ev.loss.total);
  write_key_values(ev.metrics.to_key_values(), dir / file);
  log.info("evaluated {} {} samples", idx.size(), o.split);
  out << ev.metrics.to_table();
  return kOk;
}

int cmd_ablate(const Options& o, std::ostream& out, spdlog::logger& /*log*/,
               const std::shared_ptr<spdlog::logger>& lp) {
  Settings s = load_settings(o.config, o.seed);
  const auto manifest = load_manifest(o.manifest);
  const fs::path dir(o.out);
  prepare_output(dir, {"ablation.json", "ablation.txt", "config.cfg"}, o.force);
  write_key_values(s.to_key_values(), dir / "config.cfg");
  const auto table = ablate(s.model, s.train, manifest, epoch_logger(lp, s.train.epochs));
  write_file_atomic(dir / "ablation.json", table.to_json());
  write_file_atomic(dir / "ablation.txt", table.to_text());
  out << table.to_text();
  return kOk;
}

int cmd_grid(const Options& o, std::ostream& out, spdlog::logger& log) {
  Settings s = load_settings(o.config, o.seed);
  const auto manifest = load_manifest(o.manifest);
  if (o.limit < 0) throw CliError(kUsageError, "--limit must be >= 0");
  auto grid = standard_grid(GridPoint{s.model, s.train});
  if (o.limit > 0 && static_cast<std::size_t>(o.limit) < grid.size()) grid.resize(static_cast<std::size_t>(o.limit));
  const fs::path dir(o.out);
  prepare_output(dir, {}, o.force);
  write_key_values(s.to_key_values(), dir / "config.cfg");
  log.info("grid of {} points, cache {}", grid.size(), (dir / "cache").string());
  const auto results = grid_search(grid, manifest, dir / "cache");
  const std::string table = format_grid_table(results);
  write_file_atomic(dir / "grid.txt", table);
  out << table;
  return kOk;
}

int cmd_report(const Options& o, std::ostream& out) {
  const fs::path dir(o.in);
  if (o.in.empty()) throw CliError(kUsageError, "missing --in");
  if (!fs::is_directory(dir)) throw CliError(kMissingFile, "results directory not found: " + o.in);
  bool any = false;
  if (fs::exists(dir / "ablation.json")) {
    std::ifstream in(dir / "ablation.json");
    std::stringstream buf;
    buf << in.rdbuf();
    const auto table = AblationTable::from_json(buf.str());
    out << "Ablation (validation)\n" << table.to_text() << '\n';
    any = true;
  }
  if (fs::is_directory(dir / "cache")) {
    out << "Grid search ranking\n" << format_grid_table(load_grid_cache(dir / "cache")) << '\n';
    any = true;
  }
  std::vector<fs::path> metric_files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("metrics.", 0) == 0 && e.path().extension() == ".txt") metric_files.push_back(e.path());
  }
  std::sort(metric_files.begin(), metric_files.end());
  for (const auto& f : metric_files) {
    const auto report = MetricsReport::from_key_values(read_key_values(f));
    out << "Metrics (" << f.filename().string() << ", " << report.sample_count << " samples)\n"
        << report.to_table() << '\n';
    any = true;
  }
  if (!any) throw CliError(kMissingFile, "no ablation, grid cache or metrics files in " + o.in);
  return kOk;
}

int cmd_inspect(const Options& o, std::ostream& out) {
  const auto model = load_checkpoint(o.checkpoint);
  const auto report = model.count_parameters();
  out << "parameters " << report.total << '\n';
  for (const auto& [module, n] : report.per_module) out << "  " << module << ' ' << n << '\n';
  if (o.ids.empty()) return kOk;
  const auto manifest = load_manifest(o.manifest);
  check_compatible(model, manifest);
  std::stringstream list(o.ids);
  for (std::string id; std::getline(list, id, ',');) {
    const auto it = std::find_if(manifest.samples.begin(), manifest.samples.end(),
                                 [&](const EmbeddedSample& s) { return s.id == id; });
    if (it == manifest.samples.end()) throw CliError(kInvalidInput, "no sample with id '" + id + "'");
    out << id;
    const auto pred = model.predict(*it);
    for (const auto& [task, scores] : pred.head_scores) {
      out << "  " << task << '=';
      for (Eigen::Index k = 0; k < scores.probabilities.cols(); ++k) {
        out << (k ? "," : "") << format_double(scores.probabilities(0, k));
      }
    }
    out << '\n';
    if (!model.config().ablations.no_caption) {
      out << "  caption:   " << manifest.caption_vocab.decode(model.greedy_caption(*it)) << '\n'
          << "  reference: " << manifest.caption_vocab.decode(it->caption_ids) << '\n';
    }
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual-stage multimodal fusion classifier for image memes", "memefier"};
  app.require_subcommand(1, 1);
  Options o;

  auto common = [&](CLI::App* sub, bool config) {
    if (config) {
      sub->add_option("--config", o.config, "key = value config file");
      sub->add_option("--seed", o.seed, "overrides every seed in the config");
    }
    sub->add_flag("--force", o.force, "overwrite existing outputs");
  };
  auto* synth = app.add_subcommand("synth", "write a planted-rule synthetic manifest");
  common(synth, true);
  synth->add_option("--out", o.out, "output directory")->required();
  synth->add_option("--n", o.n, "number of samples");
  synth->add_option("--d", o.d, "embedding dimension");
  synth->add_option("--ng", o.n_g, "image patches per sample");
  synth->add_option("--nx", o.n_x, "text tokens per sample");

  auto* train_cmd = app.add_subcommand("train", "train and write checkpoints plus history");
  common(train_cmd, true);
  train_cmd->add_option("--manifest", o.manifest, "dataset manifest")->required();
  train_cmd->add_option("--out", o.out, "output directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a manifest split");
  common(eval_cmd, false);
  eval_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--manifest", o.manifest, "dataset manifest")->required();
  eval_cmd->add_option("--split", o.split, "train, val or test")->capture_default_str();
  eval_cmd->add_option("--out", o.out, "output directory")->required();

  auto* ablate_cmd = app.add_subcommand("ablate", "full model plus the four single removals");
  common(ablate_cmd, true);
  ablate_cmd->add_option("--manifest", o.manifest, "dataset manifest")->required();
  ablate_cmd->add_option("--out", o.out, "output directory")->required();

  auto* grid_cmd = app.add_subcommand("grid", "resumable 64-point hyperparameter grid");
  common(grid_cmd, true);
  grid_cmd->add_option("--manifest", o.manifest, "dataset manifest")->required();
  grid_cmd->add_option("--out", o.out, "output directory (cache lives in <out>/cache)")->required();
  grid_cmd->add_option("--limit", o.limit, "run only the first N grid points (0 = all)");

  auto* report_cmd = app.add_subcommand("report", "render tables from a results directory");
  report_cmd->add_option("--in", o.in, "directory written by train, eval, ablate or grid")->required();

  auto* inspect_cmd = app.add_subcommand("inspect", "parameter counts and greedy captions");
  inspect_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  inspect_cmd->add_option("--manifest", o.manifest, "manifest holding the samples named by --ids");
  inspect_cmd->add_option("--ids", o.ids, "comma-separated sample ids")->needs("--manifest");

  std::vector<std::string> argv_store{"memefier"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  auto logger = make_logger(err);
  try {
    if (synth->parsed()) return cmd_synth(o, out, *logger);
    if (train_cmd->parsed()) return cmd_train(o, out, *logger, logger);
    if (eval_cmd->parsed()) return cmd_eval(o, out, *logger);
    if (ablate_cmd->parsed()) return cmd_ablate(o, out, *logger, logger);
    if (grid_cmd->parsed()) return cmd_grid(o, out, *logger);
    if (report_cmd->parsed()) return cmd_report(o, out);
    if (inspect_cmd->parsed()) return cmd_inspect(o, out);
    return kUsageError;
  } catch (const CliError& e) {
    err << "memefier: error: " << e.what() << '\n';
    return e.code();
  } catch (const ConfigError& e) {
    err << "memefier: config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const ManifestError& e) {
    err << "memefier: invalid input: " << e.what() << '\n';
    return kInvalidInput;
  } catch (const std::exception& e) {
    err << "memefier: error: " << e.what() << '\n';
    return kRuntimeError;
  }
}

}  // namespace memefier::cli
