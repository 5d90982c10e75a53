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

#include "memefier/training.hpp"

#include <json.hpp>

#include <cstdio>

namespace memefier {

const std::vector<std::string>& ablation_row_labels() {
  static const std::vector<std::string> labels = {
      "MemeFier", "- External knowledge", "- Caption supervision", "- Fusion stage 1",
      "- Fusion stage 2"};
  return labels;
}

AblationTable ablate(const ModelConfig& model_config, const TrainConfig& train_config,
                     const DatasetManifest& manifest, const EpochCallback& on_epoch) {
  if (model_config.ablations != Ablations{}) {
    throw std::invalid_argument("ablate: the reference configuration must enable every component");
  }
  std::vector<Ablations> variants(5);
  variants[1].no_external = true;
  variants[2].no_caption = true;
  variants[3].no_stage1 = true;
  variants[4].no_stage2 = true;

  AblationTable table;
  const auto& labels = ablation_row_labels();
  for (std::size_t i = 0; i < variants.size(); ++i) {
    ModelConfig cfg = model_config;
    cfg.ablations = variants[i];
    if (cfg.ablations.no_caption) cfg.alpha = 0.0;
    auto result = train(cfg, train_config, manifest, on_epoch);
    AblationRow row;
    row.label = labels[i];
    row.ablations = variants[i];
    row.val_score = result.best_score;
    const auto& best = result.history.at(static_cast<std::size_t>(result.best_epoch - 1)).val_metrics;
    if (best.tasks.size() == 1 && best.tasks.begin()->second.auc) row.val_auc = best.tasks.begin()->second.auc;
    row.parameter_count = result.best_model.count_parameters().total;
    row.best_epoch = result.best_epoch;
    row.history = std::move(result.history);
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string AblationTable::to_text() const {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-24s %10s %12s\n", "variant", "val score", "parameters");
  out += line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-24s %10.1f %12zu\n", r.label.c_str(), 100.0 * r.val_score,
                  r.parameter_count);
    out += line;
  }
  return out;
}

std::string AblationTable::to_json() const {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row;
    row["label"] = r.label;
    row["no_external"] = r.ablations.no_external;
    row["no_caption"] = r.ablations.no_caption;
    row["no_stage1"] = r.ablations.no_stage1;
    row["no_stage2"] = r.ablations.no_stage2;
    row["val_score"] = r.val_score;
    if (r.val_auc) row["val_auc"] = *r.val_auc;
    row["parameters"] = r.parameter_count;
    row["best_epoch"] = r.best_epoch;
    j.push_back(row);
  }
  return j.dump(2) + "\n";
}

AblationTable AblationTable::from_json(const std::string& text) {
  AblationTable t;
  for (const auto& row : nlohmann::json::parse(text)) {
    AblationRow r;
    r.label = row.at("label").get<std::string>();
    r.ablations.no_external = row.at("no_external").get<bool>();
    r.ablations.no_caption = row.at("no_caption").get<bool>();
    r.ablations.no_stage1 = row.at("no_stage1").get<bool>();
    r.ablations.no_stage2 = row.at("no_stage2").get<bool>();
    r.val_score = row.at("val_score").get<double>();
    if (row.contains("val_auc")) r.val_auc = row.at("val_auc").get<double>();
    r.parameter_count = row.at("parameters").get<std::size_t>();
    r.best_epoch = row.at("best_epoch").get<int>();
    t.rows.push_back(std::move(r));
  }
  return t;
}

}  // namespace memefier
