// Copyright 2026 The sasv-ensemble Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Built-in consistency checks: loop-based reference computations, finite
// difference gradients and algebraic invariants, sized to run in seconds.

#include <cstddef>
#include <functional>
#include <string>

namespace sasv {

struct SelftestCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SelftestSummary {
  std::size_t passed = 0;
  std::size_t failed = 0;
};

SelftestSummary run_selftest(const std::function<void(const SelftestCheck&)>& on_check = {});

}  // namespace sasv
