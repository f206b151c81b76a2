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

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "flowcon/binary_io.hpp"
#include "flowcon/checkpoint.hpp"
#include "flowcon/errors.hpp"
#include "flowcon/train.hpp"
#include "test_util.hpp"

namespace flowcon {
namespace {

using nd::Tensor;

std::uint32_t le32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return std::uint32_t(b[at]) | std::uint32_t(b[at + 1]) << 8 | std::uint32_t(b[at + 2]) << 16 |
         std::uint32_t(b[at + 3]) << 24;
}

double le64f(const std::vector<std::uint8_t>& b, std::size_t at) {
  std::uint64_t u = 0;
  for (int i = 7; i >= 0; --i) u = (u << 8) | b[at + i];
  double d;
  std::memcpy(&d, &u, 8);
  return d;
}

TEST(Crc32, CheckValue) {
  const std::string s = "123456789";
  EXPECT_EQ(io::crc32({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}), 0xCBF43926u);
}

TEST(Checkpoint, ByteLayout) {
  const FlowModel m = testing::random_model(2, 1, 3, 4);
  const auto bytes = encode_checkpoint(m);
  ASSERT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "FCKP");
  EXPECT_EQ(le32(bytes, 4), 1u);
  EXPECT_EQ(le32(bytes, 8), 2u);
  EXPECT_EQ(le32(bytes, 12), 1u);
  EXPECT_EQ(le32(bytes, 16), 3u);
  const auto params = parameters(m);
  EXPECT_EQ(le32(bytes, 20), params.size() + 1);

  std::size_t at = 24;
  for (const auto& p : params) {
    const std::uint32_t len = le32(bytes, at);
    EXPECT_EQ(std::string(bytes.begin() + at + 4, bytes.begin() + at + 4 + len), p.name);
    at += 4 + len;
    const std::uint32_t rank = le32(bytes, at);
    ASSERT_EQ(rank, p.tensor->rank());
    at += 4;
    for (std::uint32_t r = 0; r < rank; ++r, at += 4) EXPECT_EQ(le32(bytes, at), p.tensor->shape()[r]);
    for (std::size_t k = 0; k < p.tensor->numel(); ++k, at += 8)
      EXPECT_EQ(le64f(bytes, at), (*p.tensor)[k]);
  }
  // Scalar scale clamp entry, then the CRC trailer.
  const std::uint32_t len = le32(bytes, at);
  EXPECT_EQ(std::string(bytes.begin() + at + 4, bytes.begin() + at + 4 + len), "scale_clamp");
  at += 4 + len;
  EXPECT_EQ(le32(bytes, at), 0u);
  EXPECT_EQ(le64f(bytes, at + 4), kDefaultScaleClamp);
  at += 12;
  ASSERT_EQ(at + 4, bytes.size());
  EXPECT_EQ(le32(bytes, at), io::crc32({bytes.data(), at}));
}

TEST(Checkpoint, RoundTrip) {
  const FlowModel m = testing::random_model(5, 3, 7, 1);
  const FlowModel back = decode_checkpoint(encode_checkpoint(m));
  EXPECT_EQ(back.dim, 5u);
  EXPECT_EQ(back.hidden, 7u);
  ASSERT_EQ(back.num_blocks(), 3u);
  const auto a = parameters(m);
  const auto b = parameters(back);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].name, b[i].name);
    EXPECT_EQ(*a[i].tensor, *b[i].tensor);
  }
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(back.blocks[k].mask, m.blocks[k].mask);
  EXPECT_EQ(encode_checkpoint(back), encode_checkpoint(m));
}

TEST(Checkpoint, CustomScaleClamp) {
  const FlowModel m = init_model(3, 2, 4, 1, 3.5);
  EXPECT_EQ(decode_checkpoint(encode_checkpoint(m)).blocks[1].scale_clamp, 3.5);
}

TEST(Checkpoint, FileRoundTrip) {
  const auto dir = testing::temp_dir("ckpt");
  const FlowModel m = testing::random_model(4, 2, 5, 2);
  const std::string path = (dir / "m.fckp").string();
  save_checkpoint(m, path);
  EXPECT_FALSE(std::filesystem::exists(path + ".tmp"));
  EXPECT_EQ(encode_checkpoint(load_checkpoint(path)), encode_checkpoint(m));
  EXPECT_THROW(load_checkpoint((dir / "missing.fckp").string()), IoError);
}

TEST(Checkpoint, CorruptedCrcRejected) {
  auto bytes = encode_checkpoint(testing::random_model(3, 1, 2, 3));
  bytes[30] ^= 0x01;
  EXPECT_THROW(decode_checkpoint(bytes), FormatError);
}

TEST(Checkpoint, BadMagicAndVersion) {
  auto bytes = encode_checkpoint(init_model(3, 1, 2, 3));
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), FormatError);

  // Rewrite the version and fix up the CRC so only the version is wrong.
  bad = bytes;
  bad[4] = 2;
  const std::uint32_t crc = io::crc32({bad.data(), bad.size() - 4});
  for (int i = 0; i < 4; ++i) bad[bad.size() - 4 + i] = static_cast<std::uint8_t>(crc >> (8 * i));
  try {
    decode_checkpoint(bad);
    FAIL() << "version 2 accepted";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }
}

TEST(Checkpoint, Truncated) {
  const auto bytes = encode_checkpoint(init_model(3, 1, 2, 3));
  EXPECT_THROW(decode_checkpoint(std::span(bytes).first(bytes.size() / 2)), FormatError);
  EXPECT_THROW(decode_checkpoint(std::span(bytes).first(3)), FormatError);
}

TEST(Checkpoint, OptimizerStateUsesSameLayout) {
  const FlowModel m = testing::random_model(3, 1, 2, 5);
  std::vector<Tensor*> params;
  FlowModel copy = m;
  for (auto& p : parameters(copy)) params.push_back(p.tensor);
  TrainState st;
  st.adam = AdamState::zeros(params, AdamConfig{});
  st.seed = 12;
  const auto bytes = encode_train_state(m, st);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "FCOS");
  const TensorContainer c = decode_container(bytes, "FCOS");
  EXPECT_EQ(c.get("train.seed_lo").item(), 12.0);
  EXPECT_THROW(c.get("nope"), FormatError);
  EXPECT_THROW(decode_checkpoint(bytes), FormatError);

  auto bad = bytes;
  bad[bad.size() - 1] ^= 0xFF;
  EXPECT_THROW(decode_train_state(bad, m), FormatError);
}

}  // namespace
}  // namespace flowcon
