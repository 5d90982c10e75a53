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

#include "memefier/dataset.hpp"

#include "memefier/digest.hpp"

#include <bit>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace memefier {
namespace {

constexpr std::string_view kMagic = "memefier-manifest";

bool same_matrix(const FloatMatrix& a, const FloatMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    // Bit identity, so that -0/+0 and NaN payloads count as written.
    if (std::bit_cast<std::uint32_t>(a.data()[i]) != std::bit_cast<std::uint32_t>(b.data()[i])) {
      return false;
    }
  }
  return true;
}

void put_float(std::ostream& out, float v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out << ' ';
  out.write(buf, res.ptr - buf);
}

void put_row_major(std::ostream& out, const FloatMatrix& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) put_float(out, m.data()[i]);
}

template <typename Int>
void put_ints(std::ostream& out, const std::vector<Int>& v) {
  for (Int x : v) out << ' ' << x;
}

// Whitespace tokenizer over one line that reports errors against a sample.
class LineReader {
 public:
  LineReader(std::string line, std::string sample_id, std::size_t line_no)
      : line_(std::move(line)), sample_(std::move(sample_id)), line_no_(line_no) {}

  std::string_view token() {
    while (pos_ < line_.size() && line_[pos_] == ' ') ++pos_;
    if (pos_ >= line_.size()) fail("unexpected end of record");
    const std::size_t start = pos_;
    while (pos_ < line_.size() && line_[pos_] != ' ') ++pos_;
    return std::string_view(line_).substr(start, pos_ - start);
  }

  template <typename Int>
  Int integer() {
    auto t = token();
    Int v{};
    auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc() || res.ptr != t.data() + t.size()) {
      fail("malformed integer '" + std::string(t) + "'");
    }
    return v;
  }

  float real() {
    auto t = token();
    float v = 0;
    auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc() || res.ptr != t.data() + t.size()) {
      fail("malformed real '" + std::string(t) + "'");
    }
    return v;
  }

  void expect(std::string_view key) {
    auto t = token();
    if (t != key) fail("expected '" + std::string(key) + "', found '" + std::string(t) + "'");
  }

  void finish() {
    while (pos_ < line_.size() && line_[pos_] == ' ') ++pos_;
    if (pos_ != line_.size()) fail("trailing data");
  }

  FloatMatrix reals(Eigen::Index rows, Eigen::Index cols) {
    FloatMatrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = real();
    return m;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw ManifestError("line " + std::to_string(line_no_) + ": " + what, sample_);
  }

 private:
  std::string line_;
  std::string sample_;
  std::size_t line_no_;
  std::size_t pos_ = 0;
};

class RecordStream {
 public:
  explicit RecordStream(std::istream& in) : in_(in) {}

  LineReader next(const std::string& sample_id = {}) {
    std::string line;
    if (!std::getline(in_, line)) {
      throw ManifestError("unexpected end of file after line " + std::to_string(line_no_),
                          sample_id);
    }
    ++line_no_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return LineReader(std::move(line), sample_id, line_no_);
  }

  bool at_end() {
    return in_.peek() == std::char_traits<char>::eof();
  }

 private:
  std::istream& in_;
  std::size_t line_no_ = 0;
};

}  // namespace

bool EmbeddedSample::operator==(const EmbeddedSample& other) const {
  return id == other.id && same_matrix(image_global, other.image_global) &&
         same_matrix(image_patches, other.image_patches) &&
         same_matrix(text_global, other.text_global) &&
         same_matrix(text_tokens, other.text_tokens) && external_codes == other.external_codes &&
         caption_ids == other.caption_ids && labels == other.labels;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  throw std::invalid_argument("unknown split '" + std::string(text) + "'");
}

std::vector<std::size_t> DatasetManifest::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < splits.size(); ++i) {
    if (splits[i] == split) out.push_back(i);
  }
  return out;
}

void DatasetManifest::validate() const {
  if (schema_version != kSchemaVersion) throw SchemaVersionError(schema_version, kSchemaVersion);
  if (d_img < 1 || d_txt < 1) throw ManifestError("d_img and d_txt must be positive");
  for (int s : attribute_vocab_sizes) {
    if (s < 1) throw ManifestError("attribute vocabulary sizes must be positive");
  }
  if (splits.size() != samples.size()) {
    throw ManifestError("every sample needs exactly one split tag");
  }
  std::set<std::string> seen;
  const auto vocab = static_cast<std::int32_t>(caption_vocab.size());
  for (const auto& s : samples) {
    if (s.id.empty() || s.id.find_first_of(" \t\r\n") != std::string::npos) {
      throw ManifestError("sample id must be a non-empty single token", s.id);
    }
    if (!seen.insert(s.id).second) throw ManifestError("duplicate sample id", s.id);
    if (s.image_global.rows() != 1 || s.image_global.cols() != d_img) {
      throw ManifestError("image_global must have d_img values", s.id);
    }
    if (s.text_global.rows() != 1 || s.text_global.cols() != d_txt) {
      throw ManifestError("text_global must have d_txt values", s.id);
    }
    if (s.image_patches.rows() < 1 || s.image_patches.cols() != d_img) {
      throw ManifestError("image_patches must hold >= 1 row of d_img values", s.id);
    }
    if (s.text_tokens.rows() < 1 || s.text_tokens.cols() != d_txt) {
      throw ManifestError("text_tokens must hold >= 1 row of d_txt values", s.id);
    }
    if (s.external_codes.size() % kAttributesPerPerson != 0) {
      throw ManifestError("external_codes length must be a multiple of 3", s.id);
    }
    for (std::size_t i = 0; i < s.external_codes.size(); ++i) {
      const int limit = attribute_vocab_sizes[i % kAttributesPerPerson];
      const auto c = s.external_codes[i];
      if (c < 0 || c >= limit) {
        throw ManifestError("external code " + std::to_string(c) + " at position " +
                                std::to_string(i) + " outside attribute vocabulary of size " +
                                std::to_string(limit),
                            s.id);
      }
    }
    for (auto c : s.caption_ids) {
      if (c < 0 || c >= vocab) {
        throw ManifestError("caption id " + std::to_string(c) + " outside caption vocabulary", s.id);
      }
    }
    for (const auto& [task, values] : s.labels) {
      if (task.empty() || task.find_first_of(" \t\r\n") != std::string::npos) {
        throw ManifestError("label task name must be a single token", s.id);
      }
      if (values.empty()) throw ManifestError("label '" + task + "' has no values", s.id);
    }
  }
}

void write_manifest(const DatasetManifest& m, std::ostream& out) {
  m.validate();
  out << kMagic << ' ' << m.schema_version << '\n';
  out << "d_img " << m.d_img << '\n';
  out << "d_txt " << m.d_txt << '\n';
  out << "attribute_vocab " << m.attribute_vocab_sizes[0] << ' ' << m.attribute_vocab_sizes[1]
      << ' ' << m.attribute_vocab_sizes[2] << '\n';
  const auto words = m.caption_vocab.words();
  out << "caption_vocab " << m.caption_vocab.max_len() << ' ' << words.size() << '\n';
  out << "caption_words";
  for (const auto& w : words) out << ' ' << w;
  out << '\n';
  out << "samples " << m.samples.size() << '\n';
  for (std::size_t i = 0; i < m.samples.size(); ++i) {
    const auto& s = m.samples[i];
    out << "sample " << s.id << ' ' << to_string(m.splits[i]) << '\n';
    out << "image_global";
    put_row_major(out, s.image_global);
    out << "\nimage_patches " << s.image_patches.rows();
    put_row_major(out, s.image_patches);
    out << "\ntext_global";
    put_row_major(out, s.text_global);
    out << "\ntext_tokens " << s.text_tokens.rows();
    put_row_major(out, s.text_tokens);
    out << "\nexternal_codes " << s.external_codes.size();
    put_ints(out, s.external_codes);
    out << "\ncaption_ids " << s.caption_ids.size();
    put_ints(out, s.caption_ids);
    out << '\n';
    for (const auto& [task, values] : s.labels) {
      out << "label " << task << ' ' << values.size();
      put_ints(out, values);
      out << '\n';
    }
    out << "end\n";
  }
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open manifest for writing: " + path.string());
  write_manifest(manifest, out);
  if (!out) throw std::runtime_error("failed writing manifest: " + path.string());
}

DatasetManifest read_manifest(std::istream& in) {
  RecordStream records(in);
  DatasetManifest m;
  {
    auto line = records.next();
    auto magic = line.token();
    if (magic != kMagic) throw ManifestError("not a manifest file (bad magic)");
    m.schema_version = line.integer<int>();
    line.finish();
    if (m.schema_version != DatasetManifest::kSchemaVersion) {
      throw SchemaVersionError(m.schema_version, DatasetManifest::kSchemaVersion);
    }
  }
  {
    auto line = records.next();
    line.expect("d_img");
    m.d_img = line.integer<int>();
    line.finish();
  }
  {
    auto line = records.next();
    line.expect("d_txt");
    m.d_txt = line.integer<int>();
    line.finish();
  }
  {
    auto line = records.next();
    line.expect("attribute_vocab");
    for (int& s : m.attribute_vocab_sizes) s = line.integer<int>();
    line.finish();
  }
  {
    auto line = records.next();
    line.expect("caption_vocab");
    const int max_len = line.integer<int>();
    const auto count = line.integer<std::size_t>();
    line.finish();
    auto wl = records.next();
    wl.expect("caption_words");
    std::vector<std::string> words;
    words.reserve(count);
    for (std::size_t i = 0; i < count; ++i) words.emplace_back(wl.token());
    wl.finish();
    try {
      m.caption_vocab = Vocabulary(std::move(words), max_len);
    } catch (const std::invalid_argument& e) {
      throw ManifestError(std::string("caption vocabulary: ") + e.what());
    }
  }
  std::size_t count = 0;
  {
    auto line = records.next();
    line.expect("samples");
    count = line.integer<std::size_t>();
    line.finish();
  }
  m.samples.reserve(count);
  m.splits.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    EmbeddedSample s;
    {
      auto line = records.next();
      line.expect("sample");
      s.id = std::string(line.token());
      auto split = line.token();
      line.finish();
      try {
        m.splits.push_back(parse_split(split));
      } catch (const std::invalid_argument& e) {
        throw ManifestError(e.what(), s.id);
      }
    }
    {
      auto line = records.next(s.id);
      line.expect("image_global");
      s.image_global = line.reals(1, m.d_img);
      line.finish();
    }
    {
      auto line = records.next(s.id);
      line.expect("image_patches");
      const auto rows = line.integer<Eigen::Index>();
      if (rows < 0) line.fail("negative patch count");
      s.image_patches = line.reals(rows, m.d_img);
      line.finish();
    }
    {
      auto line = records.next(s.id);
      line.expect("text_global");
      s.text_global = line.reals(1, m.d_txt);
      line.finish();
    }
    {
      auto line = records.next(s.id);
      line.expect("text_tokens");
      const auto rows = line.integer<Eigen::Index>();
      if (rows < 0) line.fail("negative token count");
      s.text_tokens = line.reals(rows, m.d_txt);
      line.finish();
    }
    {
      auto line = records.next(s.id);
      line.expect("external_codes");
      const auto n = line.integer<std::size_t>();
      s.external_codes.resize(n);
      for (auto& c : s.external_codes) c = line.integer<std::int32_t>();
      line.finish();
    }
    {
      auto line = records.next(s.id);
      line.expect("caption_ids");
      const auto n = line.integer<std::size_t>();
      s.caption_ids.resize(n);
      for (auto& c : s.caption_ids) c = line.integer<std::int32_t>();
      line.finish();
    }
    for (;;) {
      auto line = records.next(s.id);
      auto key = line.token();
      if (key == "end") {
        line.finish();
        break;
      }
      if (key != "label") line.fail("expected 'label' or 'end', found '" + std::string(key) + "'");
      std::string task(line.token());
      const auto n = line.integer<std::size_t>();
      std::vector<std::int32_t> values(n);
      for (auto& v : values) v = line.integer<std::int32_t>();
      line.finish();
      if (!s.labels.emplace(task, std::move(values)).second) {
        line.fail("duplicate label '" + task + "'");
      }
    }
    m.samples.push_back(std::move(s));
  }
  m.validate();
  return m;
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open manifest: " + path.string());
  return read_manifest(in);
}

std::string manifest_digest(const DatasetManifest& manifest) {
  std::ostringstream out;
  write_manifest(manifest, out);
  return sha256_hex(out.str());
}

}  // namespace memefier
