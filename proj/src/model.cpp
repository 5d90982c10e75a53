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

#include "memefier/model.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace memefier {
namespace {

template <typename T>
ad::Matrix<T> uniform_matrix(std::mt19937_64& rng, int rows, int cols, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  ad::Matrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
  return m;
}

// Normal(0, 0.02) redrawn outside two standard deviations.
template <typename T>
ad::Matrix<T> truncated_normal(std::mt19937_64& rng, int rows, int cols) {
  constexpr double kStd = 0.02;
  std::normal_distribution<double> dist(0.0, kStd);
  ad::Matrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    double v = 0;
    do {
      v = dist(rng);
    } while (std::abs(v) > 2.0 * kStd);
    m.data()[i] = static_cast<T>(v);
  }
  return m;
}

std::vector<std::vector<bool>> key_mask(std::size_t queries, const std::vector<bool>& pad) {
  std::vector<bool> row(pad.size());
  for (std::size_t c = 0; c < pad.size(); ++c) row[c] = !pad[c];
  return std::vector<std::vector<bool>>(queries, row);
}

std::vector<std::vector<bool>> causal_mask(std::size_t length) {
  std::vector<std::vector<bool>> m(length, std::vector<bool>(length, false));
  for (std::size_t r = 0; r < length; ++r) {
    for (std::size_t c = 0; c <= r; ++c) m[r][c] = true;
  }
  return m;
}

}  // namespace

// ---- ParameterSet ----------------------------------------------------------

template <typename T>
std::size_t ParameterSet<T>::add(std::string name, ad::Matrix<T> value) {
  const std::size_t idx = params_.size();
  if (!index_.emplace(name, idx).second) {
    throw std::logic_error("duplicate parameter name: " + name);
  }
  params_.push_back(Parameter<T>{std::move(name), std::move(value)});
  return idx;
}

template <typename T>
std::optional<std::size_t> ParameterSet<T>::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

template <typename T>
std::size_t ParameterSet<T>::index(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return it->second;
}

template <typename T>
std::size_t ParameterSet<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

// ---- losses ----------------------------------------------------------------

template <typename T>
std::vector<T> head_targets(const HeadSpec& head, const std::vector<std::int32_t>& label) {
  switch (head.kind) {
    case HeadKind::kBinary:
      if (label.size() != 1 || (label[0] != 0 && label[0] != 1)) {
        throw std::invalid_argument("binary label for '" + head.task + "' must be 0 or 1");
      }
      return {static_cast<T>(label[0])};
    case HeadKind::kMulticlass:
      if (label.size() != 1 || label[0] < 0 || label[0] >= head.classes) {
        throw std::invalid_argument("multiclass label for '" + head.task + "' out of range");
      }
      return {static_cast<T>(label[0])};
    case HeadKind::kMultilabel: {
      if (label.size() != static_cast<std::size_t>(head.classes)) {
        throw std::invalid_argument("multilabel label for '" + head.task + "' needs " +
                                    std::to_string(head.classes) + " flags");
      }
      std::vector<T> t;
      for (auto v : label) {
        if (v != 0 && v != 1) {
          throw std::invalid_argument("multilabel flags for '" + head.task + "' must be 0/1");
        }
        t.push_back(static_cast<T>(v));
      }
      return t;
    }
  }
  throw std::invalid_argument("unknown head kind");
}

template <typename T>
LossVars<T> combined_loss(ad::Tape<T>& tape, const std::vector<HeadSpec>& heads,
                          const std::map<std::string, ad::Var>& head_logits,
                          const std::map<std::string, std::vector<std::int32_t>>& labels,
                          std::optional<ad::Var> caption_logits,
                          std::span<const std::int32_t> caption_ids, double alpha) {
  if (!(alpha >= 0.0)) throw std::invalid_argument("combined_loss: alpha must be >= 0");
  if (heads.empty()) throw std::invalid_argument("combined_loss: no heads");
  LossVars<T> out;
  std::optional<ad::Var> task;
  for (const auto& head : heads) {
    auto lg = head_logits.find(head.task);
    if (lg == head_logits.end()) throw std::invalid_argument("no logits for task '" + head.task + "'");
    auto lb = labels.find(head.task);
    if (lb == labels.end()) throw std::invalid_argument("no label for task '" + head.task + "'");
    const auto targets = head_targets<T>(head, lb->second);
    ad::Var part;
    if (head.kind == HeadKind::kMulticlass) {
      const std::int64_t cls = static_cast<std::int64_t>(targets[0]);
      part = tape.softmax_cross_entropy(lg->second, std::span<const std::int64_t>(&cls, 1));
    } else {
      part = tape.sigmoid_cross_entropy(lg->second, targets);
    }
    out.per_head[head.task] = part;
    task = task ? tape.add(*task, part) : part;
  }
  out.task = *task;
  out.total = out.task;
  if (caption_logits) {
    if (caption_ids.size() < 2) throw std::invalid_argument("combined_loss: caption too short");
    std::vector<std::int64_t> targets(caption_ids.begin() + 1, caption_ids.end());
    out.caption = tape.softmax_cross_entropy(*caption_logits, targets, Vocabulary::kPad);
    out.total = tape.add(out.task, tape.scale(*out.caption, static_cast<T>(alpha)));
  }
  return out;
}

template <typename T>
LossParts combined_loss(const std::vector<HeadSpec>& heads, const ModelOutput<T>& output,
                        const std::map<std::string, std::vector<std::int32_t>>& labels,
                        std::span<const std::int32_t> caption_ids, double alpha) {
  ad::Tape<T> tape;
  std::map<std::string, ad::Var> logits;
  for (const auto& [task, scores] : output.head_scores) logits[task] = tape.constant(scores.logits);
  std::optional<ad::Var> caption;
  if (output.caption_logits) caption = tape.constant(*output.caption_logits);
  auto vars = combined_loss<T>(tape, heads, logits, labels, caption, caption_ids, alpha);
  LossParts parts;
  parts.total = static_cast<double>(tape.value(vars.total)(0, 0));
  parts.task = static_cast<double>(tape.value(vars.task)(0, 0));
  if (vars.caption) parts.caption = static_cast<double>(tape.value(*vars.caption)(0, 0));
  for (const auto& [task, v] : vars.per_head) parts.per_head[task] = static_cast<double>(tape.value(v)(0, 0));
  return parts;
}

// ---- construction ------------------------------------------------------------

template <typename T>
MemeFier<T>::MemeFier(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  build(rng);
}

template <typename T>
typename MemeFier<T>::Affine MemeFier<T>::make_affine(std::mt19937_64& rng, const std::string& name,
                                                      int out, int in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Affine a;
  a.weight = params_.add(name + ".weight", uniform_matrix<T>(rng, out, in, bound));
  a.bias = params_.add(name + ".bias", uniform_matrix<T>(rng, 1, out, bound));
  return a;
}

template <typename T>
typename MemeFier<T>::Attention MemeFier<T>::make_attention(std::mt19937_64& rng,
                                                            const std::string& name, int dim) {
  Attention a;
  a.query = make_affine(rng, name + ".query", dim, dim);
  a.key = make_affine(rng, name + ".key", dim, dim);
  a.value = make_affine(rng, name + ".value", dim, dim);
  a.output = make_affine(rng, name + ".output", dim, dim);
  return a;
}

template <typename T>
typename MemeFier<T>::Norm MemeFier<T>::make_norm(const std::string& name, int dim) {
  Norm n;
  n.gain = params_.add(name + ".gain", ad::Matrix<T>::Ones(1, dim));
  n.shift = params_.add(name + ".shift", ad::Matrix<T>::Zero(1, dim));
  return n;
}

template <typename T>
std::size_t MemeFier<T>::make_embedding(std::mt19937_64& rng, const std::string& name, int rows,
                                        int cols) {
  return params_.add(name, truncated_normal<T>(rng, rows, cols));
}

template <typename T>
void MemeFier<T>::build(std::mt19937_64& rng) {
  const auto& c = config_;
  const int d = c.d_model;
  const bool stage1 = !c.ablations.no_stage1;

  proj_image_token_ = make_affine(rng, "proj.image_token", d, c.d_img);
  if (stage1) proj_image_global_ = make_affine(rng, "proj.image_global", d, c.d_img);
  proj_text_token_ = make_affine(rng, "proj.text_token", d, c.d_txt);
  if (stage1) proj_text_global_ = make_affine(rng, "proj.text_global", d, c.d_txt);

  if (!c.ablations.no_external) {
    const int rows = std::accumulate(c.attribute_vocab_sizes.begin(), c.attribute_vocab_sizes.end(), 0);
    external_table_ = make_embedding(rng, "ext.embedding", rows, d);
  }

  cls_ = make_embedding(rng, "enc.cls", 1, d);
  position_ = make_embedding(rng, "enc.position", c.max_positions, d);
  segment_ = make_embedding(rng, "enc.segment", kNumSegmentEmbeddings, d);
  if (!c.ablations.no_stage2) {
    for (int l = 0; l < c.n_layers; ++l) {
      const std::string p = "enc.layers." + std::to_string(l);
      EncoderLayer layer;
      layer.attn = make_attention(rng, p + ".attn", d);
      layer.norm1 = make_norm(p + ".norm1", d);
      layer.ff1 = make_affine(rng, p + ".ff1", c.ff_dim, d);
      layer.ff2 = make_affine(rng, p + ".ff2", d, c.ff_dim);
      layer.norm2 = make_norm(p + ".norm2", d);
      encoder_.push_back(layer);
    }
  }

  for (const auto& h : c.heads) heads_.push_back(make_affine(rng, "head." + h.task, h.units(), d));

  if (!c.ablations.no_caption) {
    const int dd = c.decoder_dim;
    memory_ = make_affine(rng, "dec.memory", dd, d);
    caption_token_ = make_embedding(rng, "dec.token", c.caption_vocab_size, dd);
    caption_position_ = make_embedding(rng, "dec.position", c.caption_max_len, dd);
    for (int l = 0; l < c.decoder_layers; ++l) {
      const std::string p = "dec.layers." + std::to_string(l);
      DecoderLayer layer;
      layer.self_attn = make_attention(rng, p + ".self_attn", dd);
      layer.norm1 = make_norm(p + ".norm1", dd);
      layer.cross_attn = make_attention(rng, p + ".cross_attn", dd);
      layer.norm2 = make_norm(p + ".norm2", dd);
      layer.ff1 = make_affine(rng, p + ".ff1", c.decoder_ff, dd);
      layer.ff2 = make_affine(rng, p + ".ff2", dd, c.decoder_ff);
      layer.norm3 = make_norm(p + ".norm3", dd);
      decoder_.push_back(layer);
    }
    caption_output_ = make_affine(rng, "dec.output", c.caption_vocab_size, dd);
  }
}

// ---- building blocks ---------------------------------------------------------

template <typename T>
ad::Var MemeFier<T>::apply(ad::Tape<T>& tape, const Affine& a, ad::Var x) const {
  return tape.affine(x, param(tape, a.weight), param(tape, a.bias));
}

template <typename T>
ad::Var MemeFier<T>::apply(ad::Tape<T>& tape, const Norm& n, ad::Var x) const {
  return tape.layer_norm(x, param(tape, n.gain), param(tape, n.shift));
}

template <typename T>
ad::Var MemeFier<T>::attend(ad::Tape<T>& tape, const Attention& a, ad::Var queries, ad::Var keys,
                            int heads, const std::vector<std::vector<bool>>& allowed,
                            std::vector<ad::Matrix<T>>* trace) const {
  ad::Var q = apply(tape, a.query, queries);
  ad::Var k = apply(tape, a.key, keys);
  ad::Var v = apply(tape, a.value, keys);
  const Eigen::Index dim = tape.value(q).cols();
  const Eigen::Index dh = dim / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  std::vector<ad::Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    ad::Var qh = tape.slice_cols(q, h * dh, dh);
    ad::Var kh = tape.slice_cols(k, h * dh, dh);
    ad::Var vh = tape.slice_cols(v, h * dh, dh);
    ad::Var scores = tape.scale(tape.matmul_nt(qh, kh), scale);
    ad::Var probs = tape.softmax_rows(scores, allowed);
    if (trace) trace->push_back(tape.value(probs));
    outs.push_back(tape.matmul(probs, vh));
  }
  ad::Var merged = heads == 1 ? outs[0] : tape.concat_cols(outs);
  return apply(tape, a.output, merged);
}

template <typename T>
ad::Var MemeFier<T>::dropout(ad::Tape<T>& tape, ad::Var x, const ForwardOptions<T>& options) const {
  if (!options.training || config_.dropout <= 0.0) return x;
  if (options.rng == nullptr) throw std::invalid_argument("training forward needs an rng");
  const auto& v = tape.value(x);
  const double keep = 1.0 - config_.dropout;
  std::bernoulli_distribution coin(keep);
  ad::Matrix<T> mask(v.rows(), v.cols());
  const T kept = static_cast<T>(1.0 / keep);
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = coin(*options.rng) ? kept : T(0);
  return tape.mul(x, tape.constant(std::move(mask)));
}

template <typename T>
ad::Var MemeFier<T>::as_constant(ad::Tape<T>& tape, const FloatMatrix& m) const {
  return tape.constant(m.template cast<T>());
}

// ---- operations ----------------------------------------------------------------

template <typename T>
Projections MemeFier<T>::project_modalities(ad::Tape<T>& tape, const EmbeddedSample& s) const {
  const auto& c = config_;
  if (s.image_patches.cols() != c.d_img || s.image_global.cols() != c.d_img ||
      s.image_global.rows() != 1) {
    throw std::invalid_argument("sample '" + s.id + "': image embedding dimension mismatch");
  }
  if (s.text_tokens.cols() != c.d_txt || s.text_global.cols() != c.d_txt ||
      s.text_global.rows() != 1) {
    throw std::invalid_argument("sample '" + s.id + "': text embedding dimension mismatch");
  }
  if (s.image_patches.rows() < 1 || s.text_tokens.rows() < 1) {
    throw std::invalid_argument("sample '" + s.id + "': needs >= 1 patch and >= 1 token");
  }
  Projections p;
  p.image_tokens = apply(tape, proj_image_token_, as_constant(tape, s.image_patches));
  p.text_tokens = apply(tape, proj_text_token_, as_constant(tape, s.text_tokens));
  if (!c.ablations.no_stage1) {
    p.image_global = apply(tape, proj_image_global_, as_constant(tape, s.image_global));
    p.text_global = apply(tape, proj_text_global_, as_constant(tape, s.text_global));
  } else {
    // Globals are unused without stage 1; expose the token maps applied to them.
    p.image_global = apply(tape, proj_image_token_, as_constant(tape, s.image_global));
    p.text_global = apply(tape, proj_text_token_, as_constant(tape, s.text_global));
  }
  return p;
}

template <typename T>
FusedTokens MemeFier<T>::fuse_stage1(ad::Tape<T>& tape, const Projections& p) const {
  FusedTokens f;
  f.image = tape.mul_row(p.image_tokens, p.text_global);
  f.text = tape.mul_row(p.text_tokens, p.image_global);
  return f;
}

template <typename T>
ad::Var MemeFier<T>::embed_external(ad::Tape<T>& tape, std::span<const std::int32_t> codes) const {
  if (config_.ablations.no_external) {
    throw std::logic_error("embed_external called with the external-knowledge input ablated");
  }
  if (codes.size() % kAttributesPerPerson != 0) {
    throw std::invalid_argument("external codes length must be a multiple of 3");
  }
  const auto& sizes = config_.attribute_vocab_sizes;
  const std::array<int, 3> offsets{0, sizes[0], sizes[0] + sizes[1]};
  std::vector<std::int64_t> rows(codes.size());
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const std::size_t attr = i % kAttributesPerPerson;
    if (codes[i] < 0 || codes[i] >= sizes[attr]) {
      throw std::invalid_argument("external code " + std::to_string(codes[i]) +
                                  " outside attribute vocabulary of size " +
                                  std::to_string(sizes[attr]));
    }
    rows[i] = offsets[attr] + codes[i];
  }
  return tape.gather_rows(param(tape, external_table_), rows);
}

template <typename T>
FusedSequence MemeFier<T>::encode(ad::Tape<T>& tape, ad::Var image, ad::Var text, ad::Var external,
                                  const ForwardOptions<T>& options) const {
  const auto& c = config_;
  const int d = c.d_model;
  FusedSequence seq;
  seq.n_g = static_cast<int>(tape.value(image).rows());
  seq.n_x = static_cast<int>(tape.value(text).rows());
  seq.n_e = static_cast<int>(tape.value(external).rows());
  for (ad::Var v : {image, text, external}) {
    if (tape.value(v).cols() != d) throw std::invalid_argument("encode: operand width != d_model");
  }
  const std::size_t real = 1 + static_cast<std::size_t>(seq.n_g + seq.n_x + seq.n_e);
  const std::size_t total = std::max(real, options.pad_to);
  if (total > static_cast<std::size_t>(c.max_positions)) {
    throw std::invalid_argument("encode: sequence length " + std::to_string(total) +
                                " exceeds max_positions " + std::to_string(c.max_positions));
  }

  seq.segments.push_back(Segment::kCls);
  seq.segments.insert(seq.segments.end(), static_cast<std::size_t>(seq.n_g), Segment::kImage);
  seq.segments.insert(seq.segments.end(), static_cast<std::size_t>(seq.n_x), Segment::kText);
  seq.segments.insert(seq.segments.end(), static_cast<std::size_t>(seq.n_e), Segment::kExternal);
  std::vector<std::int64_t> positions(real);
  std::iota(positions.begin(), positions.end(), 0);
  std::vector<std::int64_t> segment_rows(real);
  for (std::size_t i = 0; i < real; ++i) segment_rows[i] = static_cast<std::int64_t>(seq.segments[i]);

  const ad::Var parts[] = {param(tape, cls_), image, text, external};
  ad::Var x = tape.concat_rows(parts);
  x = tape.add(x, tape.gather_rows(param(tape, position_), positions));
  x = tape.add(x, tape.gather_rows(param(tape, segment_), segment_rows));
  x = dropout(tape, x, options);

  seq.pad_mask.assign(real, false);
  if (total > real) {
    const ad::Var padded[] = {x, tape.constant(ad::Matrix<T>::Zero(
                                     static_cast<Eigen::Index>(total - real), d))};
    x = tape.concat_rows(padded);
    seq.segments.insert(seq.segments.end(), total - real, Segment::kPad);
    seq.pad_mask.insert(seq.pad_mask.end(), total - real, true);
  }
  seq.input = x;

  if (c.ablations.no_stage2) {
    seq.output = x;
    return seq;
  }
  const auto allowed = key_mask(total, seq.pad_mask);
  for (const auto& layer : encoder_) {
    ad::Var a = attend(tape, layer.attn, x, x, c.n_heads, allowed,
                       options.trace ? &options.trace->encoder_self : nullptr);
    x = apply(tape, layer.norm1, tape.add(x, dropout(tape, a, options)));
    ad::Var h = tape.relu(apply(tape, layer.ff1, x));
    h = apply(tape, layer.ff2, dropout(tape, h, options));
    x = apply(tape, layer.norm2, tape.add(x, dropout(tape, h, options)));
  }
  seq.output = x;
  return seq;
}

template <typename T>
std::map<std::string, ad::Var> MemeFier<T>::classify(ad::Tape<T>& tape, ad::Var r_cls) const {
  std::map<std::string, ad::Var> out;
  for (std::size_t i = 0; i < config_.heads.size(); ++i) {
    out[config_.heads[i].task] = apply(tape, heads_[i], r_cls);
  }
  return out;
}

template <typename T>
ad::Var MemeFier<T>::decode_caption(ad::Tape<T>& tape, ad::Var fused_image_features,
                                    std::span<const std::int32_t> prefix,
                                    const ForwardOptions<T>& options) const {
  const auto& c = config_;
  if (c.ablations.no_caption) throw std::logic_error("decode_caption: caption decoder ablated");
  if (prefix.empty() || prefix[0] != Vocabulary::kBos) {
    throw std::invalid_argument("decode_caption: prefix must start with BOS");
  }
  if (prefix.size() > static_cast<std::size_t>(c.caption_max_len)) {
    throw std::invalid_argument("decode_caption: prefix length " + std::to_string(prefix.size()) +
                                " exceeds caption max_len " + std::to_string(c.caption_max_len));
  }
  std::vector<std::int64_t> ids(prefix.begin(), prefix.end());
  for (auto id : ids) {
    if (id < 0 || id >= c.caption_vocab_size) {
      throw std::invalid_argument("decode_caption: token id outside caption vocabulary");
    }
  }
  std::vector<std::int64_t> positions(ids.size());
  std::iota(positions.begin(), positions.end(), 0);

  ad::Var memory = apply(tape, memory_, fused_image_features);
  ad::Var y = tape.add(tape.gather_rows(param(tape, caption_token_), ids),
                       tape.gather_rows(param(tape, caption_position_), positions));
  y = dropout(tape, y, options);

  const auto causal = causal_mask(ids.size());
  const auto cross = std::vector<std::vector<bool>>(
      ids.size(), std::vector<bool>(static_cast<std::size_t>(tape.value(memory).rows()), true));
  AttentionTrace<T>* trace = options.trace;
  for (const auto& layer : decoder_) {
    ad::Var a = attend(tape, layer.self_attn, y, y, c.decoder_heads, causal,
                       trace ? &trace->decoder_self : nullptr);
    y = apply(tape, layer.norm1, tape.add(y, dropout(tape, a, options)));
    ad::Var m = attend(tape, layer.cross_attn, y, memory, c.decoder_heads, cross,
                       trace ? &trace->decoder_cross : nullptr);
    y = apply(tape, layer.norm2, tape.add(y, dropout(tape, m, options)));
    ad::Var h = tape.relu(apply(tape, layer.ff1, y));
    h = apply(tape, layer.ff2, dropout(tape, h, options));
    y = apply(tape, layer.norm3, tape.add(y, dropout(tape, h, options)));
  }
  return apply(tape, caption_output_, y);
}

template <typename T>
ForwardVars MemeFier<T>::forward(ad::Tape<T>& tape, const EmbeddedSample& sample,
                                 const ForwardOptions<T>& options) const {
  const auto& c = config_;
  const Projections p = project_modalities(tape, sample);
  const FusedTokens f = c.ablations.no_stage1 ? FusedTokens{p.image_tokens, p.text_tokens}
                                              : fuse_stage1(tape, p);
  ad::Var external = c.ablations.no_external
                         ? tape.constant(ad::Matrix<T>::Zero(0, c.d_model))
                         : embed_external(tape, sample.external_codes);

  ForwardVars out;
  out.sequence = encode(tape, f.image, f.text, external, options);
  const auto& seq = out.sequence;
  if (c.ablations.no_stage2) {
    std::vector<bool> keep(seq.pad_mask.size());
    for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = !seq.pad_mask[i];
    out.r_cls = tape.masked_mean_rows(seq.input, keep);
  } else {
    out.r_cls = tape.slice_rows(seq.output, 0, 1);
  }
  out.fused_image_features = tape.slice_rows(seq.output, 1, seq.n_g);
  out.head_logits = classify(tape, out.r_cls);

  if (!c.ablations.no_caption && sample.caption_ids.size() >= 2) {
    std::span<const std::int32_t> prefix(sample.caption_ids.data(), sample.caption_ids.size() - 1);
    out.caption_logits = decode_caption(tape, out.fused_image_features, prefix, options);
  }
  return out;
}

template <typename T>
LossVars<T> MemeFier<T>::loss(ad::Tape<T>& tape, const ForwardVars& vars,
                              const EmbeddedSample& sample) const {
  return combined_loss<T>(tape, config_.heads, vars.head_logits, sample.labels, vars.caption_logits,
                          sample.caption_ids, config_.alpha);
}

template <typename T>
ModelOutput<T> MemeFier<T>::predict(const EmbeddedSample& sample, AttentionTrace<T>* trace) const {
  ad::Tape<T> tape;
  ForwardOptions<T> options;
  options.trace = trace;
  const ForwardVars vars = forward(tape, sample, options);
  ModelOutput<T> out;
  for (const auto& head : config_.heads) {
    HeadScores<T> s;
    s.logits = tape.value(vars.head_logits.at(head.task));
    if (head.kind == HeadKind::kMulticlass) {
      const T mx = s.logits.maxCoeff();
      ad::Matrix<T> e = (s.logits.array() - mx).exp();
      s.probabilities = e / e.sum();
    } else {
      s.probabilities = s.logits.unaryExpr([](T x) { return T(1) / (T(1) + std::exp(-x)); });
    }
    out.head_scores[head.task] = std::move(s);
  }
  if (vars.caption_logits) out.caption_logits = tape.value(*vars.caption_logits);
  out.fused_image_features = tape.value(vars.fused_image_features);
  out.r_cls = tape.value(vars.r_cls);
  out.sequence_length = vars.sequence.length();
  return out;
}

template <typename T>
std::vector<std::int32_t> MemeFier<T>::greedy_caption(const EmbeddedSample& sample) const {
  if (config_.ablations.no_caption) throw std::logic_error("greedy_caption: caption decoder ablated");
  EmbeddedSample bare = sample;
  bare.caption_ids.clear();
  ad::Tape<T> tape;
  const ForwardVars vars = forward(tape, bare);
  std::vector<std::int32_t> ids{Vocabulary::kBos};
  while (ids.size() < static_cast<std::size_t>(config_.caption_max_len)) {
    ad::Var logits = decode_caption(tape, vars.fused_image_features, ids);
    const auto& L = tape.value(logits);
    Eigen::Index best = 0;
    L.row(L.rows() - 1).maxCoeff(&best);
    ids.push_back(static_cast<std::int32_t>(best));
    if (best == Vocabulary::kEos) break;
  }
  return ids;
}

template <typename T>
ParameterReport MemeFier<T>::count_parameters() const {
  ParameterReport r;
  for (const auto& p : params_) {
    const auto n = static_cast<std::size_t>(p.value.size());
    r.total += n;
    r.per_module[p.name.substr(0, p.name.find('.'))] += n;
  }
  return r;
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template class MemeFier<float>;
template class MemeFier<double>;

template std::vector<float> head_targets<float>(const HeadSpec&, const std::vector<std::int32_t>&);
template std::vector<double> head_targets<double>(const HeadSpec&, const std::vector<std::int32_t>&);
template LossVars<float> combined_loss<float>(ad::Tape<float>&, const std::vector<HeadSpec>&,
                                              const std::map<std::string, ad::Var>&,
                                              const std::map<std::string, std::vector<std::int32_t>>&,
                                              std::optional<ad::Var>, std::span<const std::int32_t>,
                                              double);
template LossVars<double> combined_loss<double>(ad::Tape<double>&, const std::vector<HeadSpec>&,
                                                const std::map<std::string, ad::Var>&,
                                                const std::map<std::string, std::vector<std::int32_t>>&,
                                                std::optional<ad::Var>, std::span<const std::int32_t>,
                                                double);
template LossParts combined_loss<float>(const std::vector<HeadSpec>&, const ModelOutput<float>&,
                                        const std::map<std::string, std::vector<std::int32_t>>&,
                                        std::span<const std::int32_t>, double);
template LossParts combined_loss<double>(const std::vector<HeadSpec>&, const ModelOutput<double>&,
                                         const std::map<std::string, std::vector<std::int32_t>>&,
                                         std::span<const std::int32_t>, double);

}  // namespace memefier
