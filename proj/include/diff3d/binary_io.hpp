// Copyright 2026 The Diff3D Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace diff3d::io {

/// Little-endian encoder into a byte string.
class ByteWriter {
 public:
  void bytes(std::string_view raw) { out_.append(raw); }
  void u32(std::uint32_t v);
  void f32(float v);
  /// u32 byte length followed by the bytes.
  void str(std::string_view s);

  const std::string& data() const { return out_; }

 private:
  std::string out_;
};

/// Little-endian decoder; throws DataError on truncation.
class ByteReader {
 public:
  ByteReader(std::string_view data, std::string context)
      : data_(data), context_(std::move(context)) {}

  std::string_view bytes(std::size_t n);
  std::uint32_t u32();
  float f32();
  std::string str();

  std::size_t remaining() const { return data_.size() - pos_; }
  void expect_end() const;

 private:
  std::string_view data_;
  std::string context_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace diff3d::io
