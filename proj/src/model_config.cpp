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

#include "memefier/model_config.hpp"

#include "memefier/config_file.hpp"
#include "memefier/dataset.hpp"

#include <set>
#include <sstream>

namespace memefier {
namespace {

std::vector<std::string> split_on(std::string_view text, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (;;) {
    const auto at = text.find(sep, start);
    parts.emplace_back(text.substr(start, at == std::string_view::npos ? text.npos : at - start));
    if (at == std::string_view::npos) break;
    start = at + 1;
  }
  return parts;
}

const char* kind_name(HeadKind kind) {
  switch (kind) {
    case HeadKind::kBinary: return "binary";
    case HeadKind::kMulticlass: return "multiclass";
    case HeadKind::kMultilabel: return "multilabel";
  }
  return "?";
}

}  // namespace

std::string to_string(const HeadSpec& head) {
  std::string out = head.task + ":" + kind_name(head.kind);
  if (head.kind != HeadKind::kBinary) out += ":" + std::to_string(head.classes);
  return out;
}

HeadSpec parse_head(std::string_view text) {
  const auto parts = split_on(text, ':');
  if (parts.size() < 2 || parts[0].empty()) {
    throw ConfigError("head '" + std::string(text) + "': expected task:kind[:classes]");
  }
  HeadSpec h;
  h.task = parts[0];
  if (parts[1] == "binary") {
    if (parts.size() != 2) throw ConfigError("binary head '" + h.task + "' takes no class count");
    h.kind = HeadKind::kBinary;
    h.classes = 1;
    return h;
  }
  if (parts[1] == "multiclass") {
    h.kind = HeadKind::kMulticlass;
  } else if (parts[1] == "multilabel") {
    h.kind = HeadKind::kMultilabel;
  } else {
    throw ConfigError("head '" + h.task + "': unknown head kind '" + parts[1] + "'");
  }
  if (parts.size() != 3) throw ConfigError("head '" + h.task + "' needs a class count");
  h.classes = parse_int("model.heads", parts[2]);
  return h;
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("model config: " + what);
  };
  require(d_model > 0 && d_img > 0 && d_txt > 0, "dimensions must be positive");
  require(n_heads > 0 && d_model % n_heads == 0, "d_model must be divisible by n_heads");
  require(ff_dim > 0, "ff_dim must be positive");
  require(n_layers >= 1, "n_layers must be >= 1");
  require(decoder_dim > 0 && decoder_heads > 0 && decoder_dim % decoder_heads == 0,
          "decoder_dim must be divisible by decoder_heads");
  require(decoder_ff > 0 && decoder_layers >= 1, "decoder_ff and decoder_layers must be positive");
  require(alpha >= 0.0, "alpha must be >= 0");
  require(!(ablations.no_caption && alpha != 0.0), "alpha must be 0 when no_caption is set");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  require(max_positions >= 2, "max_positions must be >= 2");
  for (int s : attribute_vocab_sizes) require(s >= 1, "attribute vocabulary sizes must be positive");
  require(caption_vocab_size >= 4, "caption vocabulary must include the 4 special tokens");
  require(caption_max_len >= 2, "caption_max_len must be >= 2");
  require(!heads.empty(), "at least one head is required");
  std::set<std::string> names;
  for (const auto& h : heads) {
    require(!h.task.empty(), "head task name is empty");
    require(names.insert(h.task).second, "duplicate head task '" + h.task + "'");
    if (h.kind == HeadKind::kBinary) {
      require(h.classes == 1, "binary head '" + h.task + "' must have 1 unit");
    } else {
      require(h.classes >= 2, "head '" + h.task + "' needs >= 2 classes");
    }
  }
}

void ModelConfig::adopt_manifest(const DatasetManifest& manifest) {
  d_img = manifest.d_img;
  d_txt = manifest.d_txt;
  attribute_vocab_sizes = manifest.attribute_vocab_sizes;
  caption_vocab_size = static_cast<int>(manifest.caption_vocab.size());
  caption_max_len = std::max(2, manifest.caption_vocab.max_len());
}

std::map<std::string, std::string> to_key_values(const ModelConfig& c) {
  std::map<std::string, std::string> kv;
  kv["model.d_model"] = std::to_string(c.d_model);
  kv["model.d_img"] = std::to_string(c.d_img);
  kv["model.d_txt"] = std::to_string(c.d_txt);
  kv["model.n_heads"] = std::to_string(c.n_heads);
  kv["model.ff_dim"] = std::to_string(c.ff_dim);
  kv["model.n_layers"] = std::to_string(c.n_layers);
  kv["model.decoder_dim"] = std::to_string(c.decoder_dim);
  kv["model.decoder_heads"] = std::to_string(c.decoder_heads);
  kv["model.decoder_ff"] = std::to_string(c.decoder_ff);
  kv["model.decoder_layers"] = std::to_string(c.decoder_layers);
  kv["model.alpha"] = format_double(c.alpha);
  std::string heads;
  for (const auto& h : c.heads) {
    if (!heads.empty()) heads += ",";
    heads += to_string(h);
  }
  kv["model.heads"] = heads;
  kv["model.no_external"] = c.ablations.no_external ? "true" : "false";
  kv["model.no_caption"] = c.ablations.no_caption ? "true" : "false";
  kv["model.no_stage1"] = c.ablations.no_stage1 ? "true" : "false";
  kv["model.no_stage2"] = c.ablations.no_stage2 ? "true" : "false";
  kv["model.dropout"] = format_double(c.dropout);
  kv["model.max_positions"] = std::to_string(c.max_positions);
  kv["model.attribute_vocab"] = std::to_string(c.attribute_vocab_sizes[0]) + "," +
                                std::to_string(c.attribute_vocab_sizes[1]) + "," +
                                std::to_string(c.attribute_vocab_sizes[2]);
  kv["model.caption_vocab_size"] = std::to_string(c.caption_vocab_size);
  kv["model.caption_max_len"] = std::to_string(c.caption_max_len);
  kv["model.seed"] = std::to_string(c.seed);
  return kv;
}

void apply_key_values(ModelConfig& c, const std::map<std::string, std::string>& values) {
  for (const auto& [key, value] : values) {
    if (key.rfind("model.", 0) != 0) continue;
    const std::string_view k = std::string_view(key).substr(6);
    if (k == "d_model") c.d_model = parse_int(key, value);
    else if (k == "d_img") c.d_img = parse_int(key, value);
    else if (k == "d_txt") c.d_txt = parse_int(key, value);
    else if (k == "n_heads") c.n_heads = parse_int(key, value);
    else if (k == "ff_dim") c.ff_dim = parse_int(key, value);
    else if (k == "n_layers") c.n_layers = parse_int(key, value);
    else if (k == "decoder_dim") c.decoder_dim = parse_int(key, value);
    else if (k == "decoder_heads") c.decoder_heads = parse_int(key, value);
    else if (k == "decoder_ff") c.decoder_ff = parse_int(key, value);
    else if (k == "decoder_layers") c.decoder_layers = parse_int(key, value);
    else if (k == "alpha") c.alpha = parse_double(key, value);
    else if (k == "heads") {
      c.heads.clear();
      for (const auto& part : split_on(value, ',')) c.heads.push_back(parse_head(part));
    }
    else if (k == "no_external") c.ablations.no_external = parse_bool(key, value);
    else if (k == "no_caption") c.ablations.no_caption = parse_bool(key, value);
    else if (k == "no_stage1") c.ablations.no_stage1 = parse_bool(key, value);
    else if (k == "no_stage2") c.ablations.no_stage2 = parse_bool(key, value);
    else if (k == "dropout") c.dropout = parse_double(key, value);
    else if (k == "max_positions") c.max_positions = parse_int(key, value);
    else if (k == "attribute_vocab") {
      const auto parts = split_on(value, ',');
      if (parts.size() != 3) throw ConfigError("model.attribute_vocab needs three sizes");
      for (int i = 0; i < 3; ++i) c.attribute_vocab_sizes[i] = parse_int(key, parts[i]);
    }
    else if (k == "caption_vocab_size") c.caption_vocab_size = parse_int(key, value);
    else if (k == "caption_max_len") c.caption_max_len = parse_int(key, value);
    else if (k == "seed") c.seed = parse_u64(key, value);
    else throw ConfigError("unknown config key '" + key + "'");
  }
}

}  // namespace memefier
