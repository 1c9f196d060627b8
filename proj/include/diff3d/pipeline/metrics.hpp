// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>

#include <json.hpp>

namespace diff3d::pipeline {

/// Ratios with an empty denominator are reported as 0.
struct MetricsReport {
  std::optional<double> auc;  // undefined for a single-class label set
  double accuracy = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  double threshold = 0.5;

  std::size_t n() const { return tp + tn + fp + fn; }
};

/// Mann–Whitney AUC with ties counted 1/2; nullopt unless both classes occur.
std::optional<double> auc_mann_whitney(std::span<const double> scores, std::span<const int> labels);

/// `probabilities` are thresholded at `threshold` (≥ is positive).
MetricsReport compute_metrics(std::span<const double> probabilities, std::span<const int> labels,
                              double threshold = 0.5);

nlohmann::json metrics_json(const MetricsReport& m);

}  // namespace diff3d::pipeline
