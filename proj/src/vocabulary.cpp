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

#include "memefier/vocabulary.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace memefier {
namespace {

constexpr std::string_view kSpecialWords[] = {"<pad>", "<bos>", "<eos>", "<unk>"};

}  // namespace

Vocabulary::Vocabulary() {
  for (std::string_view s : kSpecialWords) id_to_word_.emplace_back(s);
}

Vocabulary::Vocabulary(std::vector<std::string> words, int max_len) : Vocabulary() {
  if (max_len < 1) throw std::invalid_argument("vocabulary max_len must be positive");
  max_len_ = max_len;
  for (auto& w : words) {
    if (w.empty() || w.find(' ') != std::string::npos) {
      throw std::invalid_argument("vocabulary word must be a non-empty single token");
    }
    if (std::find(std::begin(kSpecialWords), std::end(kSpecialWords), w) != std::end(kSpecialWords)) {
      throw std::invalid_argument("vocabulary word collides with a special token: " + w);
    }
    const auto id = static_cast<std::int32_t>(id_to_word_.size());
    if (!word_to_id_.emplace(w, id).second) {
      throw std::invalid_argument("duplicate vocabulary word: " + w);
    }
    id_to_word_.push_back(std::move(w));
  }
}

bool Vocabulary::contains(std::string_view word) const {
  return word_to_id_.find(std::string(word)) != word_to_id_.end();
}

std::int32_t Vocabulary::id(std::string_view word) const {
  auto it = word_to_id_.find(std::string(word));
  return it == word_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::word(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_word_.size()) {
    throw std::out_of_range("vocabulary id out of range: " + std::to_string(id));
  }
  return id_to_word_[static_cast<std::size_t>(id)];
}

std::span<const std::string> Vocabulary::words() const {
  return std::span<const std::string>(id_to_word_).subspan(kNumSpecials);
}

std::vector<std::int32_t> Vocabulary::encode(std::string_view text, bool frame) const {
  std::vector<std::int32_t> ids;
  if (frame) ids.push_back(kBos);
  for (const auto& w : split_words(text)) ids.push_back(id(w));
  if (frame) ids.push_back(kEos);
  return ids;
}

std::string Vocabulary::decode(std::span<const std::int32_t> ids) const {
  std::string out;
  for (std::int32_t id : ids) {
    if (id == kEos) break;
    if (id == kBos || id == kPad) continue;
    if (!out.empty()) out.push_back(' ');
    out += word(id);
  }
  return out;
}

Vocabulary build_vocab(std::span<const std::string> corpus, int min_count, double quantile) {
  if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  if (!(quantile > 0.0 && quantile <= 1.0)) {
    throw std::invalid_argument("build_vocab: quantile must lie in (0, 1]");
  }
  std::map<std::string, int> counts;
  std::vector<std::size_t> lengths;
  lengths.reserve(corpus.size());
  for (const auto& text : corpus) {
    auto words = split_words(text);
    lengths.push_back(words.size());
    for (auto& w : words) ++counts[std::move(w)];
  }
  std::vector<std::string> kept;
  for (const auto& [w, c] : counts) {
    if (c >= min_count) kept.push_back(w);
  }

  // Smallest L whose coverage reaches quantile * |corpus| texts.
  std::sort(lengths.begin(), lengths.end());
  const double target = quantile * static_cast<double>(corpus.size());
  auto needed = static_cast<std::size_t>(std::ceil(target - 1e-9));
  needed = std::clamp<std::size_t>(needed, 1, lengths.size());
  const std::size_t max_len = lengths[needed - 1];
  return Vocabulary(std::move(kept), static_cast<int>(std::max<std::size_t>(max_len, 1)));
}

Vocabulary build_caption_vocab(std::span<const std::string> captions) {
  if (captions.empty()) throw std::invalid_argument("build_caption_vocab: no captions");
  std::map<std::string, int> counts;
  std::size_t longest = 0;
  for (const auto& c : captions) {
    auto words = split_words(c);
    longest = std::max(longest, words.size());
    for (auto& w : words) ++counts[std::move(w)];
  }
  std::vector<std::string> words;
  words.reserve(counts.size());
  for (const auto& kv : counts) words.push_back(kv.first);
  return Vocabulary(std::move(words), static_cast<int>(longest + 2));
}

}  // namespace memefier
