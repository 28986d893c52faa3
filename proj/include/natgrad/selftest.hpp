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

// Named invariant checks over seeded random instances. Each check reports
// the worst measured value against a fixed tolerance; the table they form is
// what `natgrad selftest` prints.
//
// Setting NATGRAD_SELFTEST_CORRUPT to a check id or name forces that check's
// tolerance negative so it fails, which exercises the failure path.

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace natgrad {

struct CheckResult {
  std::string id;  // acceptance id ("A1") or empty
  std::string name;
  bool passed = false;
  double worst = 0.0;
  double tolerance = 0.0;
  std::size_t instances = 0;
  std::size_t skipped = 0;  // resampled instances that violated a precondition
  std::string detail;
  double seconds = 0.0;
};

struct SelfTestCheck {
  std::string id;
  std::string name;
  std::string description;
  std::function<CheckResult(double tolerance)> run;
  double tolerance = 0.0;
};

const std::vector<SelfTestCheck>& selftest_checks();

/// Runs one check by id or name, applying the corruption hook.
CheckResult run_check(const std::string& id_or_name);

/// Runs every check; writes one row per check to `table` when given.
std::vector<CheckResult> run_selftest(std::ostream* table = nullptr);

void print_check_row(std::ostream& os, const CheckResult& r);

}  // namespace natgrad
