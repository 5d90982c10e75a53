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

#ifndef MEMEFIER_METRICS_HPP_
#define MEMEFIER_METRICS_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace memefier {

// Probability that a random positive outranks a random negative, ties
// counting one half (Mann-Whitney U / (n_pos * n_neg)), from average ranks.
// Throws std::invalid_argument unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

// Unweighted mean of per-class F1 over classes 0..k-1. A class absent from
// both predictions and truth contributes 0.
double macro_f1(std::span<const int> predicted, std::span<const int> truth, int classes);

// Fraction of equal entries.
double accuracy(std::span<const int> predicted, std::span<const int> truth);

// Multilabel: exact-match ratio over rows, and the mean of per-label
// positive-class F1 scores.
double exact_match_accuracy(const std::vector<std::vector<int>>& predicted,
                            const std::vector<std::vector<int>>& truth);
double multilabel_macro_f1(const std::vector<std::vector<int>>& predicted,
                           const std::vector<std::vector<int>>& truth);

struct TaskMetrics {
  double accuracy = 0;
  std::optional<double> auc;  // binary tasks with both classes present
  double macro_f1 = 0;

  // Selection score: AUC when defined, macro-F1 otherwise.
  double score() const { return auc ? *auc : macro_f1; }
};

struct MetricsReport {
  std::map<std::string, TaskMetrics> tasks;
  std::size_t sample_count = 0;
  std::map<std::string, std::string> provenance;  // seed, config hash, split...

  // Mean of per-task selection scores.
  double score() const;

  // "key = value" lines: tasks.<name>.accuracy etc.
  std::map<std::string, std::string> to_key_values() const;
  static MetricsReport from_key_values(const std::map<std::string, std::string>& kv);

  // Fixed-width table, one row per task.
  std::string to_table() const;
};

}  // namespace memefier

#endif  // MEMEFIER_METRICS_HPP_
