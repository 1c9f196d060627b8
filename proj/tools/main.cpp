// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "diff3d/cli.hpp"

int main(int argc, char** argv) { return diff3d::cli::run_cli(argc, argv, std::cout, std::cerr); }
