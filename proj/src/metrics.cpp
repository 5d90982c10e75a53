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

#include "memefier/metrics.hpp"

#include "memefier/config_file.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace memefier {
namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": length mismatch");
}

double f1(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  require_same_length(scores.size(), labels.size(), "roc_auc");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of (1-based, tie-averaged) ranks of positives, kept doubled to stay integral.
  std::uint64_t pos = 0, neg = 0;
  std::uint64_t doubled_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t doubled_avg = static_cast<std::uint64_t>(i + 1 + j);  // 2 * mean rank
    for (std::size_t k = i; k < j; ++k) {
      const int y = labels[order[k]];
      if (y != 0 && y != 1) throw std::invalid_argument("roc_auc: labels must be 0 or 1");
      if (y == 1) {
        ++pos;
        doubled_rank_sum += doubled_avg;
      } else {
        ++neg;
      }
    }
    i = j;
  }
  if (pos == 0 || neg == 0) throw std::invalid_argument("roc_auc: both classes must be present");
  // U = R_pos - n_pos (n_pos + 1) / 2, computed on doubled values.
  const std::uint64_t doubled_u = doubled_rank_sum - pos * (pos + 1);
  return static_cast<double>(doubled_u) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double macro_f1(std::span<const int> predicted, std::span<const int> truth, int classes) {
  require_same_length(predicted.size(), truth.size(), "macro_f1");
  if (classes < 1) throw std::invalid_argument("macro_f1: classes must be >= 1");
  std::vector<std::size_t> tp(classes), fp(classes), fn(classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int p = predicted[i];
    const int t = truth[i];
    if (p < 0 || p >= classes || t < 0 || t >= classes) {
      throw std::invalid_argument("macro_f1: label outside 0..k-1");
    }
    if (p == t) {
      ++tp[t];
    } else {
      ++fp[p];
      ++fn[t];
    }
  }
  double sum = 0;
  for (int c = 0; c < classes; ++c) sum += f1(tp[c], fp[c], fn[c]);
  return sum / classes;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  require_same_length(predicted.size(), truth.size(), "accuracy");
  if (truth.empty()) throw std::invalid_argument("accuracy: no samples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double exact_match_accuracy(const std::vector<std::vector<int>>& predicted,
                            const std::vector<std::vector<int>>& truth) {
  require_same_length(predicted.size(), truth.size(), "exact_match_accuracy");
  if (truth.empty()) throw std::invalid_argument("exact_match_accuracy: no samples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    require_same_length(predicted[i].size(), truth[i].size(), "exact_match_accuracy");
    hits += predicted[i] == truth[i] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double multilabel_macro_f1(const std::vector<std::vector<int>>& predicted,
                           const std::vector<std::vector<int>>& truth) {
  require_same_length(predicted.size(), truth.size(), "multilabel_macro_f1");
  if (truth.empty()) throw std::invalid_argument("multilabel_macro_f1: no samples");
  const std::size_t k = truth[0].size();
  std::vector<std::size_t> tp(k), fp(k), fn(k);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    require_same_length(predicted[i].size(), k, "multilabel_macro_f1");
    require_same_length(truth[i].size(), k, "multilabel_macro_f1");
    for (std::size_t j = 0; j < k; ++j) {
      const bool p = predicted[i][j] != 0;
      const bool t = truth[i][j] != 0;
      if (p && t) ++tp[j];
      if (p && !t) ++fp[j];
      if (!p && t) ++fn[j];
    }
  }
  double sum = 0;
  for (std::size_t j = 0; j < k; ++j) sum += f1(tp[j], fp[j], fn[j]);
  return k == 0 ? 0.0 : sum / static_cast<double>(k);
}

double MetricsReport::score() const {
  if (tasks.empty()) return 0.0;
  double s = 0;
  for (const auto& [name, m] : tasks) s += m.score();
  return s / static_cast<double>(tasks.size());
}

std::map<std::string, std::string> MetricsReport::to_key_values() const {
  std::map<std::string, std::string> kv;
  kv["samples"] = std::to_string(sample_count);
  for (const auto& [name, m] : tasks) {
    kv["tasks." + name + ".accuracy"] = format_double(m.accuracy);
    kv["tasks." + name + ".macro_f1"] = format_double(m.macro_f1);
    if (m.auc) kv["tasks." + name + ".auc"] = format_double(*m.auc);
  }
  for (const auto& [k, v] : provenance) kv["provenance." + k] = v;
  return kv;
}

MetricsReport MetricsReport::from_key_values(const std::map<std::string, std::string>& kv) {
  MetricsReport r;
  for (const auto& [key, value] : kv) {
    if (key == "samples") {
      r.sample_count = static_cast<std::size_t>(parse_u64(key, value));
    } else if (key.rfind("provenance.", 0) == 0) {
      r.provenance[key.substr(11)] = value;
    } else if (key.rfind("tasks.", 0) == 0) {
      const auto dot = key.rfind('.');
      const std::string task = key.substr(6, dot - 6);
      const std::string field = key.substr(dot + 1);
      auto& m = r.tasks[task];
      if (field == "accuracy") m.accuracy = parse_double(key, value);
      else if (field == "macro_f1") m.macro_f1 = parse_double(key, value);
      else if (field == "auc") m.auc = parse_double(key, value);
      else throw std::invalid_argument("unknown metrics field '" + key + "'");
    } else {
      throw std::invalid_argument("unknown metrics key '" + key + "'");
    }
  }
  return r;
}

std::string MetricsReport::to_table() const {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-16s %10s %10s %10s\n", "task", "accuracy", "AUC", "F1");
  out += line;
  for (const auto& [name, m] : tasks) {
    char auc[32] = "-";
    if (m.auc) std::snprintf(auc, sizeof(auc), "%.1f", 100.0 * *m.auc);
    std::snprintf(line, sizeof(line), "%-16s %10.3f %10s %10.3f\n", name.c_str(), m.accuracy, auc,
                  m.macro_f1);
    out += line;
  }
  std::snprintf(line, sizeof(line), "(%zu samples)\n", sample_count);
  out += line;
  return out;
}

}  // namespace memefier
