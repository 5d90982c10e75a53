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

#ifndef MEMEFIER_TRAINING_HPP_
#define MEMEFIER_TRAINING_HPP_

#include "memefier/dataset.hpp"
#include "memefier/metrics.hpp"
#include "memefier/model.hpp"
#include "memefier/model_config.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace memefier {

struct TrainConfig {
  double lr = 1e-3;
  int epochs = 16;
  int batch_size = 32;
  double lr_drop_factor = 10.0;
  int lr_drop_at = 0;  // last epoch at the initial rate; 0 means ceil(epochs / 2)
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 0.0;  // global-norm clip; 0 disables
  bool eval_train = false; // also score the train split after each epoch
  int report_every = 1;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
  int drop_epoch() const;
  // Learning rate used throughout 1-based `epoch`.
  double lr_at(int epoch) const;

  bool operator==(const TrainConfig&) const = default;
};

std::map<std::string, std::string> to_key_values(const TrainConfig& config);
void apply_key_values(TrainConfig& config, const std::map<std::string, std::string>& values);

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LossSummary {
  double total = 0;
  double task = 0;
  double caption = 0;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0;
  LossSummary train;
  LossSummary val;
  MetricsReport val_metrics;
  std::optional<MetricsReport> train_metrics;
};

// One line per epoch: space separated key=value fields, reals printed with
// the shortest exact representation.
std::string format_history(const std::vector<EpochRecord>& history);

struct TrainResult {
  MemeFier<float> final_model;
  MemeFier<float> best_model;
  int best_epoch = 0;
  double best_score = 0;
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Evaluation over `indices` of the manifest: loss parts (no dropout) and
// per-task metrics. Binary/multilabel units threshold at 0.5, multiclass
// heads take the argmax.
struct Evaluation {
  LossSummary loss;
  MetricsReport metrics;
};
Evaluation evaluate(const MemeFier<float>& model, const DatasetManifest& manifest,
                    std::span<const std::size_t> indices);

// Trains on the train split, selects on the val split. Model dimensions and
// vocabulary sizes are taken from the manifest.
TrainResult train(ModelConfig model_config, const TrainConfig& train_config,
                  const DatasetManifest& manifest, const EpochCallback& on_epoch = {});

// ---- grid search ----------------------------------------------------------

struct GridPoint {
  ModelConfig model;
  TrainConfig train;
};

// Canonical key of a grid point on a given manifest (SHA-256 hex).
std::string grid_point_key(const GridPoint& point, const std::string& manifest_digest);

// The 2^6 = 64 combinations of learning rate, epochs, alpha, model
// dimension, encoder shape and decoder shape, applied on top of `base`.
std::vector<GridPoint> standard_grid(const GridPoint& base);

struct GridResult {
  std::string key;
  GridPoint point;
  bool ok = false;
  std::string error;
  double score = 0;
  int best_epoch = 0;
  MetricsReport val_metrics;
  bool from_cache = false;
};

// Trains every point not already in `cache_dir` (one JSON file per key,
// written atomically) and returns all results ranked by validation score,
// failures last. Invalid configs are rejected before any training.
std::vector<GridResult> grid_search(const std::vector<GridPoint>& grid,
                                    const DatasetManifest& manifest,
                                    const std::filesystem::path& cache_dir);

// Every cached result in `cache_dir`, ranked as by grid_search.
std::vector<GridResult> load_grid_cache(const std::filesystem::path& cache_dir);

std::string format_grid_table(const std::vector<GridResult>& results);

// ---- ablation ---------------------------------------------------------------

struct AblationRow {
  std::string label;
  Ablations ablations;
  double val_score = 0;
  std::optional<double> val_auc;
  std::size_t parameter_count = 0;
  int best_epoch = 0;
  std::vector<EpochRecord> history;
};

struct AblationTable {
  std::vector<AblationRow> rows;

  std::string to_text() const;
  std::string to_json() const;
  static AblationTable from_json(const std::string& text);
};

// Row labels in table order.
const std::vector<std::string>& ablation_row_labels();

// Full model plus the four single-component removals, identical seeds.
AblationTable ablate(const ModelConfig& model_config, const TrainConfig& train_config,
                     const DatasetManifest& manifest, const EpochCallback& on_epoch = {});

}  // namespace memefier

#endif  // MEMEFIER_TRAINING_HPP_
