// Copyright 2026 The vtalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace vtalign {

/// Calls body(i) for i in [0, n) on up to `threads` workers (0 = hardware
/// concurrency). Indices are split into contiguous blocks; callers write
/// results into pre-sized slots so output never depends on scheduling.
/// The first exception thrown by any worker is rethrown.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body);

/// Resolves 0 to the hardware thread count (at least 1).
std::size_t resolve_threads(std::size_t threads);

}  // namespace vtalign
