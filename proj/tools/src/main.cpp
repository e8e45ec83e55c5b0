// Copyright 2026 The vtalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "vtalign_cli/cli.hpp"

int main(int argc, char** argv) {
  return vtalign::cli::run(std::vector<std::string>(argv, argv + argc));
}
