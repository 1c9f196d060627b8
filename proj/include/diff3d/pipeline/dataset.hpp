// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "diff3d/numerics/tensor.hpp"
#include "diff3d/prototypes/spherical_kmeans.hpp"

namespace diff3d::pipeline {

/// SLQ1 slice sequence: "SLQ1", u32 version = 1, u32 n_slices, u32 dim,
/// n_slices·dim f32, all little-endian, slice-major.
std::string encode_slq(const Tensor& slices);
Tensor decode_slq(std::string_view bytes, const std::string& context = "slice file");
void write_slq(const std::filesystem::path& path, const Tensor& slices);
Tensor read_slq(const std::filesystem::path& path);

struct ManifestEntry {
  std::string id;
  std::string path;  // relative to the manifest's directory unless absolute
  int label = 0;
};

/// JSON array of {"id", "path", "label"}. Ids are unique.
struct Manifest {
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;  // where relative paths resolve; not serialized

  std::filesystem::path resolve(const ManifestEntry& e) const;
  std::vector<int> labels() const;
};

std::string manifest_json(const Manifest& m);
Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir,
                        const std::string& context = "manifest");
void write_manifest(const std::filesystem::path& path, const Manifest& m);
Manifest read_manifest(const std::filesystem::path& path);

struct VolumeRecord {
  std::string id;
  int label = 0;
  Tensor slices;                      // [n_slices x dim]
  std::vector<std::size_t> clusters;  // empty until assigned

  std::size_t size() const { return slices.rows(); }
};

/// Reads every entry; all sequences must share one dim (`expected_dim` when
/// non-zero). Throws DataError naming the offending patient.
std::vector<VolumeRecord> load_records(const Manifest& m, std::size_t expected_dim = 0);

/// Sets `clusters` of each record from the book. Throws DataError on a dim mismatch.
void assign_clusters(std::vector<VolumeRecord>& records, const prototypes::PrototypeBook& book);

/// All slices of all records stacked in manifest order.
Tensor stack_slices(const std::vector<VolumeRecord>& records);

}  // namespace diff3d::pipeline
