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


// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls into the library's numerical code.

#ifndef MEMEFIER_TESTS_ORACLES_HPP_
#define MEMEFIER_TESTS_ORACLES_HPP_

#include "memefier/model_config.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace oracle {

// Pairwise Mann-Whitney count: wins + ties/2 over all (pos, neg) pairs.
inline double pairwise_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

// Per-class F1 from an explicit k x k confusion matrix.
inline double confusion_macro_f1(const std::vector<int>& pred, const std::vector<int>& truth, int k) {
  std::vector<std::vector<long>> cm(static_cast<std::size_t>(k), std::vector<long>(static_cast<std::size_t>(k), 0));
  for (std::size_t i = 0; i < pred.size(); ++i) ++cm[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(pred[i])];
  double sum = 0;
  for (int c = 0; c < k; ++c) {
    const auto uc = static_cast<std::size_t>(c);
    long tp = cm[uc][uc], fp = 0, fn = 0;
    for (int o = 0; o < k; ++o) {
      if (o == c) continue;
      fp += cm[static_cast<std::size_t>(o)][uc];
      fn += cm[uc][static_cast<std::size_t>(o)];
    }
    const long denom = 2 * tp + fp + fn;
    sum += denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
  }
  return sum / k;
}

inline double count_accuracy(const std::vector<int>& a, const std::vector<int>& b) {
  long same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
  return static_cast<double>(same) / static_cast<double>(a.size());
}

inline std::vector<std::string> words_of(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> w;
  for (std::string t; in >> t;) w.push_back(t);
  return w;
}

// Words whose frequency over the corpus reaches min_count.
inline std::set<std::string> frequent_words(const std::vector<std::string>& corpus, int min_count) {
  std::map<std::string, int> freq;
  for (const auto& t : corpus) {
    for (const auto& w : words_of(t)) ++freq[w];
  }
  std::set<std::string> out;
  for (const auto& [w, n] : freq) {
    if (n >= min_count) out.insert(w);
  }
  return out;
}

// Smallest L such that at least quantile * N texts have <= L words, found by
// trying every candidate L from 1 upward.
inline int covering_length(const std::vector<std::string>& corpus, double quantile) {
  std::size_t longest = 0;
  std::vector<std::size_t> lengths;
  for (const auto& t : corpus) {
    lengths.push_back(words_of(t).size());
    longest = std::max(longest, lengths.back());
  }
  for (std::size_t L = 1; L <= std::max<std::size_t>(longest, 1); ++L) {
    std::size_t covered = 0;
    for (auto n : lengths) covered += n <= L;
    if (static_cast<double>(covered) >= quantile * static_cast<double>(corpus.size()) - 1e-9) {
      return static_cast<int>(L);
    }
  }
  return static_cast<int>(std::max<std::size_t>(longest, 1));
}

// Closed-form trainable scalar count of a configuration.
inline std::size_t parameter_count(const memefier::ModelConfig& c) {
  auto affine = [](std::size_t out, std::size_t in) { return out * in + out; };
  auto attention = [&](std::size_t d) { return 4 * affine(d, d); };
  const std::size_t d = static_cast<std::size_t>(c.d_model);
  std::size_t n = 0;
  const std::size_t proj = affine(d, static_cast<std::size_t>(c.d_img)) +
                           affine(d, static_cast<std::size_t>(c.d_txt));
  n += c.ablations.no_stage1 ? proj : 2 * proj;
  if (!c.ablations.no_external) {
    const auto& s = c.attribute_vocab_sizes;
    n += static_cast<std::size_t>(s[0] + s[1] + s[2]) * d;
  }
  n += d + static_cast<std::size_t>(c.max_positions) * d + 4 * d;
  if (!c.ablations.no_stage2) {
    const std::size_t ff = static_cast<std::size_t>(c.ff_dim);
    n += static_cast<std::size_t>(c.n_layers) * (attention(d) + 2 * 2 * d + affine(ff, d) + affine(d, ff));
  }
  for (const auto& h : c.heads) n += affine(static_cast<std::size_t>(h.units()), d);
  if (!c.ablations.no_caption) {
    const std::size_t dd = static_cast<std::size_t>(c.decoder_dim);
    const std::size_t ff = static_cast<std::size_t>(c.decoder_ff);
    const std::size_t v = static_cast<std::size_t>(c.caption_vocab_size);
    n += affine(dd, d) + v * dd + static_cast<std::size_t>(c.caption_max_len) * dd;
    n += static_cast<std::size_t>(c.decoder_layers) *
         (2 * attention(dd) + 3 * 2 * dd + affine(ff, dd) + affine(dd, ff));
    n += affine(v, dd);
  }
  return n;
}

}  // namespace oracle

#endif  // MEMEFIER_TESTS_ORACLES_HPP_
