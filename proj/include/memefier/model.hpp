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

// The dual-stage fusion network.
//
//   projections   image/text token and global embeddings -> d_model
//   stage 1       f_img[i] = img[i] * txt_global,  f_txt[j] = txt[j] * img_global
//   external      (gender, race, age) codes -> rows of one joint embedding table
//   stage 2       Transformer encoder over [CLS, f_img, f_txt, ext]
//   heads         affine maps of the encoded CLS row
//   caption       Transformer decoder cross-attending to the encoded image rows
//
// Every operation records onto an ad::Tape<T>. T = float is the training
// precision; T = double exists for gradient checking.

#ifndef MEMEFIER_MODEL_HPP_
#define MEMEFIER_MODEL_HPP_

#include "memefier/autodiff.hpp"
#include "memefier/dataset.hpp"
#include "memefier/model_config.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace memefier {

template <typename T>
struct Parameter {
  std::string name;
  ad::Matrix<T> value;
};

// Named parameter tensors in creation order.
template <typename T>
class ParameterSet {
 public:
  std::size_t add(std::string name, ad::Matrix<T> value);

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }

  std::optional<std::size_t> find(const std::string& name) const;
  std::size_t index(const std::string& name) const;  // throws when absent
  ad::Matrix<T>& value(const std::string& name) { return params_[index(name)].value; }
  const ad::Matrix<T>& value(const std::string& name) const { return params_[index(name)].value; }

  std::size_t scalar_count() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class Segment : int { kCls = 0, kImage = 1, kText = 2, kExternal = 3, kPad = 4 };
inline constexpr int kNumSegmentEmbeddings = 4;

// Outputs of the four projection maps (tape variables).
struct Projections {
  ad::Var image_tokens;  // n_g x d
  ad::Var image_global;  // 1 x d
  ad::Var text_tokens;   // n_x x d
  ad::Var text_global;   // 1 x d
};

struct FusedTokens {
  ad::Var image;  // n_g x d
  ad::Var text;   // n_x x d
};

// Token sequence [CLS, image, text, external, pads...] before and after the
// encoder stack.
struct FusedSequence {
  ad::Var input;   // encoder input incl. CLS, positional and segment terms
  ad::Var output;  // encoder output (or the input when the encoder is ablated)
  std::vector<Segment> segments;
  std::vector<bool> pad_mask;  // true marks padding
  int n_g = 0;
  int n_x = 0;
  int n_e = 0;

  std::size_t length() const { return segments.size(); }
};

// Attention probabilities recorded for inspection, one matrix per head.
template <typename T>
struct AttentionTrace {
  std::vector<ad::Matrix<T>> encoder_self;   // layer-major, head-minor
  std::vector<ad::Matrix<T>> decoder_self;
  std::vector<ad::Matrix<T>> decoder_cross;  // T_caption x n_g each
};

template <typename T>
struct ForwardOptions {
  bool training = false;            // enables dropout
  std::mt19937_64* rng = nullptr;   // dropout mask source; required when training
  AttentionTrace<T>* trace = nullptr;
  std::size_t pad_to = 0;           // append zero pad tokens up to this length
};

struct ForwardVars {
  std::map<std::string, ad::Var> head_logits;  // 1 x units per task
  std::optional<ad::Var> caption_logits;       // (len-1) x vocab, teacher forced
  ad::Var r_cls;                               // 1 x d
  ad::Var fused_image_features;                // n_g x d
  FusedSequence sequence;
};

template <typename T>
struct HeadScores {
  ad::Matrix<T> logits;         // 1 x units
  ad::Matrix<T> probabilities;  // sigmoid or softmax of logits
};

template <typename T>
struct ModelOutput {
  std::map<std::string, HeadScores<T>> head_scores;
  std::optional<ad::Matrix<T>> caption_logits;
  ad::Matrix<T> fused_image_features;
  ad::Matrix<T> r_cls;
  std::size_t sequence_length = 0;
};

template <typename T>
struct LossVars {
  ad::Var total;
  ad::Var task;
  std::optional<ad::Var> caption;
  std::map<std::string, ad::Var> per_head;
};

struct LossParts {
  double total = 0;
  double task = 0;
  double caption = 0;
  std::map<std::string, double> per_head;
};

// Converts a stored label vector into per-unit targets for a head.
template <typename T>
std::vector<T> head_targets(const HeadSpec& head, const std::vector<std::int32_t>& label);

// total = sum of head losses + alpha * caption loss. Binary and multilabel
// heads use mean sigmoid cross-entropy, multiclass heads softmax
// cross-entropy; the caption loss averages over non-PAD target positions.
template <typename T>
LossVars<T> combined_loss(ad::Tape<T>& tape, const std::vector<HeadSpec>& heads,
                          const std::map<std::string, ad::Var>& head_logits,
                          const std::map<std::string, std::vector<std::int32_t>>& labels,
                          std::optional<ad::Var> caption_logits,
                          std::span<const std::int32_t> caption_ids, double alpha);

// Value-level variant over already computed logits.
template <typename T>
LossParts combined_loss(const std::vector<HeadSpec>& heads, const ModelOutput<T>& output,
                        const std::map<std::string, std::vector<std::int32_t>>& labels,
                        std::span<const std::int32_t> caption_ids, double alpha);

struct ParameterReport {
  std::size_t total = 0;
  std::map<std::string, std::size_t> per_module;  // keyed by top-level name
};

template <typename T>
class MemeFier {
 public:
  // Validates the config and initializes parameters from config.seed.
  explicit MemeFier(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  ParameterSet<T>& parameters() { return params_; }
  const ParameterSet<T>& parameters() const { return params_; }

  ad::Var param(ad::Tape<T>& tape, std::size_t index) const {
    return tape.parameter(index, params_[index].value);
  }
  ad::Var param(ad::Tape<T>& tape, const std::string& name) const {
    return param(tape, params_.index(name));
  }

  Projections project_modalities(ad::Tape<T>& tape, const EmbeddedSample& sample) const;
  FusedTokens fuse_stage1(ad::Tape<T>& tape, const Projections& p) const;
  ad::Var embed_external(ad::Tape<T>& tape, std::span<const std::int32_t> codes) const;
  FusedSequence encode(ad::Tape<T>& tape, ad::Var image, ad::Var text, ad::Var external,
                       const ForwardOptions<T>& options = {}) const;
  std::map<std::string, ad::Var> classify(ad::Tape<T>& tape, ad::Var r_cls) const;
  ad::Var decode_caption(ad::Tape<T>& tape, ad::Var fused_image_features,
                         std::span<const std::int32_t> prefix,
                         const ForwardOptions<T>& options = {}) const;

  ForwardVars forward(ad::Tape<T>& tape, const EmbeddedSample& sample,
                      const ForwardOptions<T>& options = {}) const;
  LossVars<T> loss(ad::Tape<T>& tape, const ForwardVars& vars, const EmbeddedSample& sample) const;

  // Inference pass (no dropout) returning plain values.
  ModelOutput<T> predict(const EmbeddedSample& sample, AttentionTrace<T>* trace = nullptr) const;

  // Greedy caption from BOS until EOS or caption_max_len tokens.
  std::vector<std::int32_t> greedy_caption(const EmbeddedSample& sample) const;

  ParameterReport count_parameters() const;

 private:
  struct Affine {
    std::size_t weight;
    std::size_t bias;
  };
  struct Attention {
    Affine query, key, value, output;
  };
  struct Norm {
    std::size_t gain;
    std::size_t shift;
  };
  struct EncoderLayer {
    Attention attn;
    Norm norm1;
    Affine ff1, ff2;
    Norm norm2;
  };
  struct DecoderLayer {
    Attention self_attn;
    Norm norm1;
    Attention cross_attn;
    Norm norm2;
    Affine ff1, ff2;
    Norm norm3;
  };

  void build(std::mt19937_64& rng);
  Affine make_affine(std::mt19937_64& rng, const std::string& name, int out, int in);
  Attention make_attention(std::mt19937_64& rng, const std::string& name, int dim);
  Norm make_norm(const std::string& name, int dim);
  std::size_t make_embedding(std::mt19937_64& rng, const std::string& name, int rows, int cols);

  ad::Var apply(ad::Tape<T>& tape, const Affine& a, ad::Var x) const;
  ad::Var apply(ad::Tape<T>& tape, const Norm& n, ad::Var x) const;
  ad::Var attend(ad::Tape<T>& tape, const Attention& a, ad::Var queries, ad::Var keys,
                 int heads, const std::vector<std::vector<bool>>& allowed,
                 std::vector<ad::Matrix<T>>* trace) const;
  ad::Var dropout(ad::Tape<T>& tape, ad::Var x, const ForwardOptions<T>& options) const;
  ad::Var as_constant(ad::Tape<T>& tape, const FloatMatrix& m) const;

  ModelConfig config_;
  ParameterSet<T> params_;

  Affine proj_image_token_{}, proj_image_global_{}, proj_text_token_{}, proj_text_global_{};
  std::size_t external_table_ = 0;
  std::size_t cls_ = 0, position_ = 0, segment_ = 0;
  std::vector<EncoderLayer> encoder_;
  std::vector<Affine> heads_;
  Affine memory_{};
  std::size_t caption_token_ = 0, caption_position_ = 0;
  std::vector<DecoderLayer> decoder_;
  Affine caption_output_{};
};

extern template class ParameterSet<float>;
extern template class ParameterSet<double>;
extern template class MemeFier<float>;
extern template class MemeFier<double>;

}  // namespace memefier

#endif  // MEMEFIER_MODEL_HPP_
