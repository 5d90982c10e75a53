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

#ifndef MEMEFIER_VOCABULARY_HPP_
#define MEMEFIER_VOCABULARY_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace memefier {

// Lowercases, drops punctuation and digits, collapses whitespace runs into a
// single space and trims both ends. Idempotent.
std::string normalize_text(std::string_view raw);

// Splits on single spaces; expects normalized input.
std::vector<std::string> split_words(std::string_view text);

class Vocabulary {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kBos = 1;
  static constexpr std::int32_t kEos = 2;
  static constexpr std::int32_t kUnk = 3;
  static constexpr std::int32_t kNumSpecials = 4;

  // Specials only, max_len 1.
  Vocabulary();

  // Words receive ids kNumSpecials.. in the given order. Duplicates and
  // special spellings are rejected.
  Vocabulary(std::vector<std::string> words, int max_len);

  std::size_t size() const { return id_to_word_.size(); }
  int max_len() const { return max_len_; }

  bool contains(std::string_view word) const;
  std::int32_t id(std::string_view word) const;  // kUnk when absent
  const std::string& word(std::int32_t id) const;

  // Corpus words only (no specials), in id order.
  std::span<const std::string> words() const;

  // Token ids of a normalized text; framed with BOS/EOS when requested.
  std::vector<std::int32_t> encode(std::string_view text, bool frame = false) const;
  // Words of `ids`, stopping at EOS and skipping BOS/PAD.
  std::string decode(std::span<const std::int32_t> ids) const;

  bool operator==(const Vocabulary& other) const {
    return max_len_ == other.max_len_ && id_to_word_ == other.id_to_word_;
  }

 private:
  std::unordered_map<std::string, std::int32_t> word_to_id_;
  std::vector<std::string> id_to_word_;
  int max_len_ = 1;
};

// Words with corpus frequency >= min_count, sorted lexicographically;
// max_len is the smallest L such that at least quantile * |corpus| texts
// have <= L tokens.
Vocabulary build_vocab(std::span<const std::string> corpus, int min_count, double quantile);

// Every word of the captions; max_len = longest caption + 2 (BOS, EOS).
Vocabulary build_caption_vocab(std::span<const std::string> captions);

}  // namespace memefier

#endif  // MEMEFIER_VOCABULARY_HPP_
