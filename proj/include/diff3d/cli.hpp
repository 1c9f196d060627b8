// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>

namespace diff3d::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kDataError = 3,
  kNumericalError = 4,
};

/// Entry point of the `diff3d` tool. Settings come from an optional JSON
/// config, then DIFF3D_WORK_DIR / DIFF3D_DATASET_DIR for paths, then flags.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace diff3d::cli
