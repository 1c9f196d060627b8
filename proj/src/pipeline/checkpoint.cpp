// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#include "diff3d/pipeline/checkpoint.hpp"

#include <set>

#include "diff3d/binary_io.hpp"
#include "diff3d/error.hpp"

namespace diff3d::pipeline {

namespace {
constexpr std::string_view kMagic = "CKP1";
constexpr std::uint32_t kVersion = 1;
}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

Checkpoint snapshot(const ParameterSet& params, nlohmann::json config) {
  Checkpoint c;
  c.config = std::move(config);
  for (const Parameter* p : params.all()) c.tensors.emplace_back(p->name, p->value);
  return c;
}

void restore(const Checkpoint& ckpt, ParameterSet& params) {
  std::set<std::string> expected;
  for (Parameter* p : params.all()) {
    expected.insert(p->name);
    const Tensor* t = ckpt.find(p->name);
    if (!t) throw DataError("checkpoint is missing parameter '" + p->name + "'");
    if (t->shape() != p->value.shape()) {
      throw ShapeError("parameter '" + p->name + "' is " + shape_string(t->shape()) +
                       " in the checkpoint but " + shape_string(p->value.shape()) +
                       " in the configured model");
    }
  }
  for (const auto& [name, t] : ckpt.tensors) {
    if (!expected.count(name)) throw DataError("checkpoint has unexpected parameter '" + name + "'");
  }
  for (Parameter* p : params.all()) p->value = *ckpt.find(p->name);
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  io::ByteWriter w;
  w.bytes(kMagic);
  w.u32(kVersion);
  w.str(ckpt.config.dump());
  w.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) w.u32(static_cast<std::uint32_t>(e));
    for (double v : t.values()) w.f32(static_cast<float>(v));
  }
  return w.data();
}

Checkpoint decode_checkpoint(std::string_view bytes, const std::string& context) {
  io::ByteReader r(bytes, context);
  if (r.bytes(4) != kMagic) throw DataError(context + ": not a CKP1 checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kVersion) {
    throw DataError(context + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  try {
    c.config = nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(context + ": bad config JSON: " + e.what());
  }
  const std::uint32_t n = r.u32();
  std::set<std::string> seen;
  for (std::uint32_t i = 0; i < n; ++i) {
    std::string name = r.str();
    if (!seen.insert(name).second) throw DataError(context + ": duplicate parameter '" + name + "'");
    const std::uint32_t rank = r.u32();
    if (rank == 0 || rank > 8) throw DataError(context + ": bad rank for '" + name + "'");
    Shape shape(rank);
    std::size_t count = 1;
    for (auto& e : shape) {
      e = r.u32();
      count *= e;
    }
    if (count * 4 > r.remaining()) throw DataError(context + ": truncated tensor '" + name + "'");
    Tensor t(shape);
    for (double& v : t.values()) v = r.f32();
    c.tensors.emplace_back(std::move(name), std::move(t));
  }
  r.expect_end();
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path), path.string());
}

}  // namespace diff3d::pipeline
