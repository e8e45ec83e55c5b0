// Copyright 2026 The vtalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <string>
#include <string_view>
#include <system_error>

#include "vtalign/tensor.hpp"

namespace vtalign {

/// Shortest text that parses back to exactly `v`.
inline std::string format_number(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw ValidationError("format_number: conversion failed");
  return std::string(buf, end);
}

inline double parse_number(std::string_view s, const std::string& where) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) {
    throw ValidationError(where + ": not a number: \"" + std::string(s) + "\"");
  }
  return v;
}

}  // namespace vtalign
