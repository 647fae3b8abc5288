// Copyright 2026 The evipan Authors
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

// Central finite-difference verification of every analytic gradient.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace evipan {

struct GradCheckConfig {
  std::size_t cases = 100;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  /// Test hook: the named check scales its analytic gradient by 1.01.
  std::string corrupt;
};

struct GradCheckResult {
  std::string name;
  std::size_t cases = 0;
  std::size_t components = 0;
  std::size_t skipped = 0;  // components whose stencil crossed a ReLU kink
  double max_rel_error = 0.0;
  bool passed = false;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, kGradCheckFloor).
inline constexpr double kGradCheckFloor = 1e-5;
double gradient_relative_error(double analytic, double numeric);

/// Central difference (f(x + h e_i) - f(x - h e_i)) / 2h for each i.
std::vector<double> numeric_gradient(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> x, double h);

const std::vector<std::string>& gradient_check_names();

std::vector<GradCheckResult> run_gradient_checks(const GradCheckConfig& cfg);

}  // namespace evipan
