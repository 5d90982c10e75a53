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

#ifndef MEMEFIER_DATASET_HPP_
#define MEMEFIER_DATASET_HPP_

#include "memefier/autodiff.hpp"
#include "memefier/vocabulary.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace memefier {

using FloatMatrix = ad::Matrix<float>;

// Attribute blocks of the external-knowledge codes, in storage order.
enum class Attribute : int { kGender = 0, kRace = 1, kAge = 2 };
inline constexpr int kAttributesPerPerson = 3;

// One meme as precomputed embeddings plus external-attribute codes, caption
// target and task labels.
//
// Labels are stored as integer vectors and interpreted by the model head:
// binary {0|1}, multiclass {class index}, multilabel {k multi-hot flags}.
struct EmbeddedSample {
  std::string id;
  FloatMatrix image_global;   // 1 x d_img
  FloatMatrix image_patches;  // n_g x d_img
  FloatMatrix text_global;    // 1 x d_txt
  FloatMatrix text_tokens;    // n_x x d_txt
  std::vector<std::int32_t> external_codes;  // (gender, race, age) per person
  std::vector<std::int32_t> caption_ids;     // framed by BOS/EOS
  std::map<std::string, std::vector<std::int32_t>> labels;

  std::size_t num_persons() const { return external_codes.size() / kAttributesPerPerson; }

  // Exact field-for-field equality (shapes first, then bit values).
  bool operator==(const EmbeddedSample& other) const;
};

enum class Split { kTrain, kVal, kTest };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

// Thrown for a malformed or inconsistent manifest; carries the offending
// sample id when one is known.
class ManifestError : public std::runtime_error {
 public:
  ManifestError(const std::string& message, std::string sample_id = {})
      : std::runtime_error(sample_id.empty() ? message
                                             : "sample '" + sample_id + "': " + message),
        sample_id_(std::move(sample_id)) {}
  const std::string& sample_id() const { return sample_id_; }

 private:
  std::string sample_id_;
};

class SchemaVersionError : public ManifestError {
 public:
  SchemaVersionError(int found, int expected)
      : ManifestError("unsupported manifest schema_version " + std::to_string(found) +
                      " (expected " + std::to_string(expected) + ")"),
        found_(found) {}
  int found() const { return found_; }

 private:
  int found_;
};

struct DatasetManifest {
  static constexpr int kSchemaVersion = 1;

  int schema_version = kSchemaVersion;
  int d_img = 0;
  int d_txt = 0;
  std::array<int, kAttributesPerPerson> attribute_vocab_sizes{2, 7, 9};
  Vocabulary caption_vocab;
  std::vector<EmbeddedSample> samples;
  std::vector<Split> splits;  // parallel to samples

  // Throws ManifestError on the first violated invariant.
  void validate() const;

  std::vector<std::size_t> indices(Split split) const;

  bool operator==(const DatasetManifest&) const = default;
};

void write_manifest(const DatasetManifest& manifest, std::ostream& out);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(std::istream& in);
DatasetManifest read_manifest(const std::filesystem::path& path);

// SHA-256 hex of the serialized manifest.
std::string manifest_digest(const DatasetManifest& manifest);

// Planted-rule generator. Each sample draws unit vectors z (image) and w
// (text) whose inner product has a balanced sign s, 0-2 persons with uniform
// attribute codes, and is labelled 1 iff s = +1 and the planted code is
// worn by at least one person. Captions quantize z's first three coordinates.
struct SyntheticOptions {
  int n = 64;
  int d = 16;
  int n_g = 4;
  int n_x = 4;
  std::uint64_t seed = 0;
  float noise = 0.05f;  // expected norm of the per-token perturbation
  float min_cosine = 0.1f;
  float max_cosine = 0.9f;
  int planted_attribute = static_cast<int>(Attribute::kGender);
  int planted_code = 1;
  std::string task = "hate";
  double train_fraction = 0.7;
  double val_fraction = 0.15;
};

DatasetManifest generate_synthetic(const SyntheticOptions& options);
DatasetManifest generate_synthetic(int n, int d, int n_g, int n_x, std::uint64_t seed);

// Words of the fixed caption alphabet used by the generator.
const std::array<std::string_view, 8>& synthetic_caption_alphabet();

}  // namespace memefier

#endif  // MEMEFIER_DATASET_HPP_
