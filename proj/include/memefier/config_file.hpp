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

#ifndef MEMEFIER_CONFIG_FILE_HPP_
#define MEMEFIER_CONFIG_FILE_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>

namespace memefier {

// Ordered "key = value" pairs. Files hold one pair per line; blank lines and
// lines starting with '#' are ignored.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(std::istream& in);
KeyValues read_key_values(const std::filesystem::path& path);
std::string format_key_values(const KeyValues& values);
void write_key_values(const KeyValues& values, const std::filesystem::path& path);

// Scalar conversions; failures throw ConfigError mentioning `key`.
int parse_int(std::string_view key, std::string_view value);
std::uint64_t parse_u64(std::string_view key, std::string_view value);
double parse_double(std::string_view key, std::string_view value);
bool parse_bool(std::string_view key, std::string_view value);

// Shortest text that reads back to the identical double.
std::string format_double(double value);

// Writes to a sibling temporary file then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace memefier

#endif  // MEMEFIER_CONFIG_FILE_HPP_
