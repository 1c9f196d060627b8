// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#include "diff3d/pipeline/dataset.hpp"

#include <set>

#include <json.hpp>

#include "diff3d/binary_io.hpp"
#include "diff3d/error.hpp"

namespace diff3d::pipeline {

namespace {
constexpr std::string_view kSlqMagic = "SLQ1";
constexpr std::uint32_t kSlqVersion = 1;
}  // namespace

std::string encode_slq(const Tensor& slices) {
  if (slices.rank() != 2) throw ShapeError("slice sequence must be [n x dim]");
  io::ByteWriter w;
  w.bytes(kSlqMagic);
  w.u32(kSlqVersion);
  w.u32(static_cast<std::uint32_t>(slices.rows()));
  w.u32(static_cast<std::uint32_t>(slices.cols()));
  for (double v : slices.values()) w.f32(static_cast<float>(v));
  return w.data();
}

Tensor decode_slq(std::string_view bytes, const std::string& context) {
  io::ByteReader r(bytes, context);
  if (r.bytes(4) != kSlqMagic) throw DataError(context + ": not an SLQ1 file");
  const std::uint32_t version = r.u32();
  if (version != kSlqVersion) {
    throw DataError(context + ": unsupported SLQ version " + std::to_string(version));
  }
  const std::size_t n = r.u32(), dim = r.u32();
  if (n == 0 || dim == 0) throw DataError(context + ": empty slice sequence");
  Tensor t({n, dim});
  for (double& v : t.values()) v = r.f32();
  r.expect_end();
  return t;
}

void write_slq(const std::filesystem::path& path, const Tensor& slices) {
  io::write_file_atomic(path, encode_slq(slices));
}

Tensor read_slq(const std::filesystem::path& path) {
  return decode_slq(io::read_file(path), path.string());
}

std::filesystem::path Manifest::resolve(const ManifestEntry& e) const {
  std::filesystem::path p(e.path);
  return p.is_absolute() ? p : base_dir / p;
}

std::vector<int> Manifest::labels() const {
  std::vector<int> out;
  for (const auto& e : entries) out.push_back(e.label);
  return out;
}

std::string manifest_json(const Manifest& m) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : m.entries) j.push_back({{"id", e.id}, {"path", e.path}, {"label", e.label}});
  return j.dump(2) + "\n";
}

Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir,
                        const std::string& context) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(context + ": " + e.what());
  }
  if (!j.is_array()) throw DataError(context + ": expected a JSON array");
  Manifest m;
  m.base_dir = base_dir;
  std::set<std::string> seen;
  for (const auto& item : j) {
    if (!item.is_object() || !item.contains("id") || !item.contains("path") ||
        !item.contains("label") || !item["id"].is_string() || !item["path"].is_string() ||
        !item["label"].is_number_integer()) {
      throw DataError(context + ": entries need string id, string path and integer label");
    }
    ManifestEntry e{item["id"], item["path"], item["label"]};
    if (e.label != 0 && e.label != 1) {
      throw DataError(context + ": patient '" + e.id + "' has label " + std::to_string(e.label));
    }
    if (!seen.insert(e.id).second) throw DataError(context + ": duplicate patient id '" + e.id + "'");
    m.entries.push_back(std::move(e));
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  io::write_file_atomic(path, manifest_json(m));
}

Manifest read_manifest(const std::filesystem::path& path) {
  return parse_manifest(io::read_file(path), path.parent_path(), path.string());
}

std::vector<VolumeRecord> load_records(const Manifest& m, std::size_t expected_dim) {
  std::vector<VolumeRecord> out;
  std::size_t dim = expected_dim;
  for (const auto& e : m.entries) {
    VolumeRecord r{e.id, e.label, read_slq(m.resolve(e)), {}};
    if (dim == 0) dim = r.slices.cols();
    if (r.slices.cols() != dim) {
      throw DataError("patient '" + e.id + "' has representation dim " +
                      std::to_string(r.slices.cols()) + ", expected " + std::to_string(dim));
    }
    out.push_back(std::move(r));
  }
  return out;
}

void assign_clusters(std::vector<VolumeRecord>& records, const prototypes::PrototypeBook& book) {
  for (auto& r : records) {
    if (r.slices.cols() != book.dim()) {
      throw DataError("patient '" + r.id + "' has dim " + std::to_string(r.slices.cols()) +
                      " but the prototype book has dim " + std::to_string(book.dim()));
    }
    r.clusters = prototypes::assign_all(book, r.slices);
  }
}

Tensor stack_slices(const std::vector<VolumeRecord>& records) {
  if (records.empty()) throw InvalidArgument("no records to stack");
  const std::size_t dim = records.front().slices.cols();
  std::vector<double> data;
  std::size_t rows = 0;
  for (const auto& r : records) {
    if (r.slices.cols() != dim) throw DataError("patient '" + r.id + "' has a different dim");
    data.insert(data.end(), r.slices.values().begin(), r.slices.values().end());
    rows += r.slices.rows();
  }
  return Tensor({rows, dim}, std::move(data));
}

}  // namespace diff3d::pipeline
