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

// Checkpoint layout (all integers little-endian uint32):
//
//   magic        8 bytes  "MFCKPT\0\1"
//   version      u32      kCheckpointVersion
//   config_len   u32      then config_len bytes of "key = value" lines
//   tensors      u32      count, then per tensor:
//     name_len u32, name bytes, rows u32, cols u32,
//     rows*cols IEEE-754 binary32 values (little-endian, row-major)

#ifndef MEMEFIER_CHECKPOINT_HPP_
#define MEMEFIER_CHECKPOINT_HPP_

#include "memefier/model.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>

namespace memefier {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string serialize_checkpoint(const MemeFier<float>& model);
MemeFier<float> deserialize_checkpoint(std::string_view bytes);

void write_checkpoint(const MemeFier<float>& model, const std::filesystem::path& path);
MemeFier<float> read_checkpoint(const std::filesystem::path& path);

}  // namespace memefier

#endif  // MEMEFIER_CHECKPOINT_HPP_
