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


#ifndef MEMEFIER_CLI_HPP_
#define MEMEFIER_CLI_HPP_

#include <iosfwd>
#include <string>
#include <vector>

namespace memefier::cli {

// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kRuntimeError = 1,    // training failure, I/O error after start
  kUsageError = 2,      // unknown subcommand or malformed flags
  kConfigError = 3,     // config file or override fails schema validation
  kMissingFile = 4,     // an input path does not exist
  kRefuseOverwrite = 5, // output exists and --force was not given
  kInvalidInput = 6,    // manifest or checkpoint fails to parse or validate
};

// Runs one invocation. `args` excludes the program name. Results go to
// `out`, log lines and the one-line error cause to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace memefier::cli

#endif  // MEMEFIER_CLI_HPP_
