// Copyright 2026 The vtalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

namespace vtalign::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;

/// Runs one `vtalign <command> ...` invocation in-process. `args[0]` is the
/// program name. Logs go to stderr; data goes to files only.
int run(const std::vector<std::string>& args);

}  // namespace vtalign::cli
