// Copyright 2026 The FlowCon Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace flowcon::io {

/// IEEE CRC-32 (zlib polynomial).
std::uint32_t crc32(std::span<const std::uint8_t> bytes);

/// Little-endian byte sink. finish() appends the CRC-32 of everything
/// written so far.
class ByteWriter {
 public:
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void magic(std::string_view m);
  void u32(std::uint32_t v);
  void f32(float v);
  void f64(double v);
  void string(std::string_view s);  // u32 length + UTF-8 bytes

  std::vector<std::uint8_t> finish() &&;
  const std::vector<std::uint8_t>& buffer() const noexcept { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Little-endian reader over a whole file image. The constructor verifies the
/// trailing CRC-32; every read reports the offending byte offset on failure.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> file);

  void expect_magic(std::string_view m);
  std::uint32_t u32();
  float f32();
  double f64();
  std::string string();
  void expect_end() const;

  std::uint64_t offset() const noexcept { return pos_; }

 private:
  const std::uint8_t* take(std::size_t n);

  std::span<const std::uint8_t> body_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace flowcon::io
