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

#include "flowcon/binary_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "flowcon/errors.hpp"

namespace flowcon::io {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; add byte swapping for this target");

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in chunks.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    crc = ::crc32(crc, bytes.data() + pos, static_cast<uInt>(n));
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

void ByteWriter::magic(std::string_view m) {
  buf_.insert(buf_.end(), m.begin(), m.end());
}

void ByteWriter::u32(std::uint32_t v) {
  std::uint8_t b[4];
  std::memcpy(b, &v, 4);
  bytes(b);
}

void ByteWriter::f32(float v) {
  std::uint8_t b[4];
  std::memcpy(b, &v, 4);
  bytes(b);
}

void ByteWriter::f64(double v) {
  std::uint8_t b[8];
  std::memcpy(b, &v, 8);
  bytes(b);
}

void ByteWriter::string(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  buf_.insert(buf_.end(), s.begin(), s.end());
}

std::vector<std::uint8_t> ByteWriter::finish() && {
  const std::uint32_t crc = crc32(buf_);
  u32(crc);
  return std::move(buf_);
}

ByteReader::ByteReader(std::span<const std::uint8_t> file) {
  if (file.size() < 4) throw FormatError("file too short for CRC trailer", file.size());
  body_ = file.first(file.size() - 4);
  std::uint32_t stored;
  std::memcpy(&stored, file.data() + body_.size(), 4);
  if (crc32(body_) != stored) throw FormatError("CRC32 mismatch", body_.size());
}

const std::uint8_t* ByteReader::take(std::size_t n) {
  if (body_.size() - pos_ < n) {
    throw FormatError("truncated: need " + std::to_string(n) + " more bytes", pos_);
  }
  const std::uint8_t* p = body_.data() + pos_;
  pos_ += n;
  return p;
}

void ByteReader::expect_magic(std::string_view m) {
  const std::size_t at = pos_;
  const std::uint8_t* p = take(m.size());
  if (std::memcmp(p, m.data(), m.size()) != 0) {
    throw FormatError("bad magic, expected '" + std::string(m) + "'", at);
  }
}

std::uint32_t ByteReader::u32() {
  std::uint32_t v;
  std::memcpy(&v, take(4), 4);
  return v;
}

float ByteReader::f32() {
  float v;
  std::memcpy(&v, take(4), 4);
  return v;
}

double ByteReader::f64() {
  double v;
  std::memcpy(&v, take(8), 8);
  return v;
}

std::string ByteReader::string() {
  const std::uint32_t n = u32();
  const std::uint8_t* p = take(n);
  return std::string(reinterpret_cast<const char*>(p), n);
}

void ByteReader::expect_end() const {
  if (pos_ != body_.size()) throw FormatError("trailing bytes before CRC", pos_);
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading", path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  // Write beside the target and rename so readers never see a partial file.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing", path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed", path);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot replace file", path);
  }
}

}  // namespace flowcon::io
