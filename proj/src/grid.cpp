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

#include "memefier/config_file.hpp"
#include "memefier/digest.hpp"
#include "memefier/training.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace memefier {
namespace {

using json = nlohmann::json;

std::map<std::string, std::string> merged_key_values(const GridPoint& p) {
  auto kv = to_key_values(p.model);
  for (auto& [k, v] : to_key_values(p.train)) kv[k] = v;
  return kv;
}

json result_to_json(const GridResult& r) {
  json j;
  j["key"] = r.key;
  j["status"] = r.ok ? "ok" : "failed";
  j["error"] = r.error;
  j["score"] = r.score;
  j["best_epoch"] = r.best_epoch;
  j["val_metrics"] = r.val_metrics.to_key_values();
  j["config"] = merged_key_values(r.point);
  return j;
}

GridResult result_from_json(const json& j) {
  GridResult r;
  r.key = j.at("key").get<std::string>();
  r.ok = j.at("status").get<std::string>() == "ok";
  r.error = j.at("error").get<std::string>();
  r.score = j.at("score").get<double>();
  r.best_epoch = j.at("best_epoch").get<int>();
  r.val_metrics = MetricsReport::from_key_values(j.at("val_metrics").get<std::map<std::string, std::string>>());
  const auto kv = j.at("config").get<std::map<std::string, std::string>>();
  apply_key_values(r.point.model, kv);
  apply_key_values(r.point.train, kv);
  r.from_cache = true;
  return r;
}

void rank(std::vector<GridResult>& results) {
  std::stable_sort(results.begin(), results.end(), [](const GridResult& a, const GridResult& b) {
    if (a.ok != b.ok) return a.ok;
    return a.score > b.score;
  });
}

}  // namespace

std::string grid_point_key(const GridPoint& point, const std::string& manifest_digest) {
  return sha256_hex(format_key_values(merged_key_values(point)) + "manifest = " + manifest_digest + "\n");
}

std::vector<GridPoint> standard_grid(const GridPoint& base) {
  std::vector<GridPoint> grid;
  for (double lr : kGridLearningRates) {
    for (int epochs : kGridEpochs) {
      for (double alpha : kGridAlphas) {
        for (int d : kGridModelDims) {
          for (const auto& enc : kGridEncoderShapes) {
            for (const auto& dec : kGridDecoderShapes) {
              GridPoint p = base;
              p.train.lr = lr;
              p.train.epochs = epochs;
              p.model.alpha = p.model.ablations.no_caption ? 0.0 : alpha;
              p.model.d_model = d;
              p.model.n_heads = enc.n_heads;
              p.model.ff_dim = enc.ff_dim;
              p.model.n_layers = enc.n_layers;
              p.model.decoder_dim = dec.dim;
              p.model.decoder_heads = dec.heads;
              p.model.decoder_ff = dec.ff;
              p.model.decoder_layers = dec.layers;
              grid.push_back(p);
            }
          }
        }
      }
    }
  }
  return grid;
}

std::vector<GridResult> grid_search(const std::vector<GridPoint>& grid, const DatasetManifest& manifest,
                                    const std::filesystem::path& cache_dir) {
  if (grid.empty()) throw std::invalid_argument("grid_search: empty grid");
  for (const auto& p : grid) {
    p.model.validate();
    p.train.validate();
  }
  std::filesystem::create_directories(cache_dir);
  const std::string digest = manifest_digest(manifest);

  std::vector<GridResult> results;
  for (const auto& point : grid) {
    const std::string key = grid_point_key(point, digest);
    const auto file = cache_dir / (key + ".json");
    if (std::filesystem::exists(file)) {
      std::ifstream in(file);
      results.push_back(result_from_json(json::parse(in)));
      continue;
    }
    GridResult r;
    r.key = key;
    r.point = point;
    try {
      auto trained = train(point.model, point.train, manifest);
      r.ok = true;
      r.score = trained.best_score;
      r.best_epoch = trained.best_epoch;
      r.val_metrics = trained.history.at(static_cast<std::size_t>(trained.best_epoch - 1)).val_metrics;
    } catch (const std::exception& e) {
      r.ok = false;
      r.error = e.what();
    }
    write_file_atomic(file, result_to_json(r).dump(2) + "\n");
    results.push_back(std::move(r));
  }
  rank(results);
  return results;
}

std::vector<GridResult> load_grid_cache(const std::filesystem::path& cache_dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(cache_dir)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<GridResult> results;
  for (const auto& file : files) {
    std::ifstream in(file);
    results.push_back(result_from_json(json::parse(in)));
  }
  rank(results);
  return results;
}

std::string format_grid_table(const std::vector<GridResult>& results) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof(line), "%4s  %-10s %8s %6s %6s %6s %-12s %-14s %8s  %s\n", "rank", "key", "lr",
                "epochs", "alpha", "d", "encoder", "decoder", "score", "status");
  out += line;
  int rank = 0;
  for (const auto& r : results) {
    ++rank;
    const auto& m = r.point.model;
    char enc[32], dec[40];
    std::snprintf(enc, sizeof(enc), "%d/%d/%d", m.n_heads, m.ff_dim, m.n_layers);
    std::snprintf(dec, sizeof(dec), "%d/%d/%d/%d", m.decoder_dim, m.decoder_heads, m.decoder_ff,
                  m.decoder_layers);
    std::snprintf(line, sizeof(line), "%4d  %-10.10s %8g %6d %6g %6d %-12s %-14s %8.4f  %s\n", rank,
                  r.key.c_str(), r.point.train.lr, r.point.train.epochs, m.alpha, m.d_model, enc, dec,
                  r.score, r.ok ? "ok" : ("failed: " + r.error).c_str());
    out += line;
  }
  return out;
}

}  // namespace memefier
