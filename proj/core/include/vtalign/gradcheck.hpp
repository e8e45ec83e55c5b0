// Copyright 2026 The vtalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <span>
#include <vector>

namespace vtalign {

using ScalarFn = std::function<double(std::span<const double>)>;

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every
/// coordinate. Throws NumericError if f is non-finite at any probe.
std::vector<double> finite_diff_grad(const ScalarFn& f, std::span<const double> x, double h = 1e-3);

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor). The floor keeps coordinates
/// whose true gradient is ~0 from dominating with round-off.
double max_relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-6);

/// |a - b|_2 / max(|a|_2, |b|_2); 0 when both are zero.
double relative_error(std::span<const double> a, std::span<const double> b);

}  // namespace vtalign
