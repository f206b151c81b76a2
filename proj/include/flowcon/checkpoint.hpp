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

#include "flowcon/flow.hpp"
#include "flowcon/tensor.hpp"

namespace flowcon {

inline constexpr std::uint32_t kContainerVersion = 1;

struct NamedTensor {
  std::string name;
  nd::Tensor tensor;
};

/// Shared layout of model checkpoints ("FCKP") and optimizer state ("FCOS"):
///   magic[4] version:u32 d:u32 K:u32 h:u32 count:u32
///   count x { name_len:u32 name rank:u32 extents:u32[rank] payload:f64[] }
///   crc32:u32
struct TensorContainer {
  std::string magic;
  std::uint32_t version = kContainerVersion;
  std::uint32_t dim = 0;
  std::uint32_t blocks = 0;
  std::uint32_t hidden = 0;
  std::vector<NamedTensor> entries;

  const nd::Tensor& get(std::string_view name) const;
};

std::vector<std::uint8_t> encode_container(const TensorContainer& c);
TensorContainer decode_container(std::span<const std::uint8_t> bytes, std::string_view magic);

std::vector<std::uint8_t> encode_checkpoint(const FlowModel& model);
FlowModel decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const FlowModel& model, const std::string& path);
FlowModel load_checkpoint(const std::string& path);

}  // namespace flowcon
