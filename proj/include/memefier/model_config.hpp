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

#ifndef MEMEFIER_MODEL_CONFIG_HPP_
#define MEMEFIER_MODEL_CONFIG_HPP_

#include <array>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace memefier {

struct DatasetManifest;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class HeadKind { kBinary, kMulticlass, kMultilabel };

// One classification output: a task name and its activation layout.
struct HeadSpec {
  std::string task;
  HeadKind kind = HeadKind::kBinary;
  int classes = 1;  // 1 for binary, k for multiclass/multilabel

  int units() const { return kind == HeadKind::kBinary ? 1 : classes; }
  bool operator==(const HeadSpec&) const = default;
};

// "hate:binary", "sentiment:multiclass:3", "emotion:multilabel:4"
std::string to_string(const HeadSpec& head);
HeadSpec parse_head(std::string_view text);

struct Ablations {
  bool no_external = false;
  bool no_caption = false;
  bool no_stage1 = false;
  bool no_stage2 = false;

  bool operator==(const Ablations&) const = default;
};

struct ModelConfig {
  int d_model = 32;
  int d_img = 16;
  int d_txt = 16;

  int n_heads = 4;
  int ff_dim = 64;
  int n_layers = 1;

  int decoder_dim = 16;
  int decoder_heads = 2;
  int decoder_ff = 32;
  int decoder_layers = 1;

  double alpha = 0.2;
  std::vector<HeadSpec> heads{HeadSpec{"hate", HeadKind::kBinary, 1}};
  Ablations ablations;
  double dropout = 0.1;
  int max_positions = 64;

  std::array<int, 3> attribute_vocab_sizes{2, 7, 9};
  int caption_vocab_size = 4;
  int caption_max_len = 2;

  std::uint64_t seed = 0;

  // Throws ConfigError naming the first violated invariant.
  void validate() const;

  // Copies dimensions and vocabulary sizes declared by a manifest.
  void adopt_manifest(const DatasetManifest& manifest);

  bool operator==(const ModelConfig&) const = default;
};

// Flat key/value view used by config files and checkpoints; grid cache keys
// hash it.
std::map<std::string, std::string> to_key_values(const ModelConfig& config);
// Applies recognised "model." keys; unknown keys under that prefix throw.
void apply_key_values(ModelConfig& config, const std::map<std::string, std::string>& values);

// Encoder/decoder shapes and the remaining binary choices of the
// hyperparameter grid.
struct EncoderShape {
  int n_heads;
  int ff_dim;
  int n_layers;
};
struct DecoderShape {
  int dim;
  int heads;
  int ff;
  int layers;
};

inline constexpr std::array<EncoderShape, 2> kGridEncoderShapes{{{4, 512, 1}, {16, 2048, 3}}};
inline constexpr std::array<DecoderShape, 2> kGridDecoderShapes{{{64, 4, 64, 1}, {256, 16, 256, 3}}};
inline constexpr std::array<int, 2> kGridModelDims{512, 1024};
inline constexpr std::array<double, 2> kGridAlphas{0.2, 0.8};
inline constexpr std::array<double, 2> kGridLearningRates{1e-4, 1e-5};
inline constexpr std::array<int, 2> kGridEpochs{16, 32};

}  // namespace memefier

#endif  // MEMEFIER_MODEL_CONFIG_HPP_
