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

#include "memefier/checkpoint.hpp"

#include "memefier/config_file.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace memefier {
namespace {

constexpr char kMagic[8] = {'M', 'F', 'C', 'K', 'P', 'T', '\0', '\1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

class Cursor {
 public:
  explicit Cursor(std::string_view bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const MemeFier<float>& model) {
  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, kCheckpointVersion);
  const std::string config = format_key_values(to_key_values(model.config()));
  put_u32(out, static_cast<std::uint32_t>(config.size()));
  out += config;
  const auto& params = model.parameters();
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    put_u32(out, static_cast<std::uint32_t>(p.value.rows()));
    put_u32(out, static_cast<std::uint32_t>(p.value.cols()));
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      put_u32(out, std::bit_cast<std::uint32_t>(p.value.data()[i]));
    }
  }
  return out;
}

MemeFier<float> deserialize_checkpoint(std::string_view bytes) {
  Cursor in(bytes);
  if (in.take(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  const auto version = in.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto config_len = in.u32();
  std::istringstream config_text{std::string(in.take(config_len))};
  ModelConfig config;
  apply_key_values(config, parse_key_values(config_text));
  MemeFier<float> model(config);
  auto& params = model.parameters();

  const auto count = in.u32();
  if (count != params.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                          std::to_string(params.size()));
  }
  std::set<std::string> seen;
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::string name(in.take(in.u32()));
    const auto rows = in.u32();
    const auto cols = in.u32();
    auto idx = params.find(name);
    if (!idx) throw CheckpointError("unexpected tensor '" + name + "'");
    if (!seen.insert(name).second) throw CheckpointError("duplicate tensor '" + name + "'");
    auto& value = params[*idx].value;
    if (value.rows() != static_cast<Eigen::Index>(rows) || value.cols() != static_cast<Eigen::Index>(cols)) {
      throw CheckpointError("tensor '" + name + "' has shape " + std::to_string(rows) + "x" +
                            std::to_string(cols) + ", model expects " + std::to_string(value.rows()) +
                            "x" + std::to_string(value.cols()));
    }
    for (Eigen::Index i = 0; i < value.size(); ++i) value.data()[i] = std::bit_cast<float>(in.u32());
  }
  if (!in.done()) throw CheckpointError("trailing bytes after checkpoint tensors");
  return model;
}

void write_checkpoint(const MemeFier<float>& model, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_checkpoint(model));
}

MemeFier<float> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace memefier
