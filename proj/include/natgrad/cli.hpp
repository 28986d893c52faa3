// Copyright 2026 The natgrad Authors.
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

#pragma once

// Command-line entry point:
//
//   natgrad train|evaluate|damping-sweep|toy|selftest --config <path>
//           [--out <dir>] [--seed <u64>] [--threads <n>]
//
// Exit codes: 0 ok, 1 other failure, 2 config error, 3 divergence,
// 4 missing artifact.

#include <iosfwd>
#include <string>
#include <vector>

namespace natgrad {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitDivergence = 3,
  kExitMissingArtifact = 4,
};

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// 64-bit FNV-1a, printed as 16 hex digits.
std::string content_hash(const std::string& text);

}  // namespace natgrad
