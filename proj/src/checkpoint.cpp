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

#include "flowcon/checkpoint.hpp"

#include "flowcon/binary_io.hpp"
#include "flowcon/errors.hpp"

namespace flowcon {

using nd::Tensor;

const Tensor& TensorContainer::get(std::string_view name) const {
  for (const auto& e : entries) {
    if (e.name == name) return e.tensor;
  }
  throw FormatError("missing entry '" + std::string(name) + "'", 0);
}

std::vector<std::uint8_t> encode_container(const TensorContainer& c) {
  if (c.magic.size() != 4) throw InvalidArgument("container magic must be 4 bytes");
  io::ByteWriter w;
  w.magic(c.magic);
  w.u32(c.version);
  w.u32(c.dim);
  w.u32(c.blocks);
  w.u32(c.hidden);
  w.u32(static_cast<std::uint32_t>(c.entries.size()));
  for (const auto& e : c.entries) {
    w.string(e.name);
    w.u32(static_cast<std::uint32_t>(e.tensor.rank()));
    for (std::size_t extent : e.tensor.shape()) w.u32(static_cast<std::uint32_t>(extent));
    for (double v : e.tensor.data()) w.f64(v);
  }
  return std::move(w).finish();
}

TensorContainer decode_container(std::span<const std::uint8_t> bytes, std::string_view magic) {
  io::ByteReader r(bytes);
  r.expect_magic(magic);
  TensorContainer c;
  c.magic = std::string(magic);
  const auto version_at = r.offset();
  c.version = r.u32();
  if (c.version != kContainerVersion) {
    throw FormatError("unsupported version " + std::to_string(c.version), version_at);
  }
  c.dim = r.u32();
  c.blocks = r.u32();
  c.hidden = r.u32();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor e;
    e.name = r.string();
    const std::uint32_t rank = r.u32();
    nd::Shape shape(rank);
    for (auto& s : shape) s = r.u32();
    Tensor t(shape);
    for (double& v : t.data()) v = r.f64();
    e.tensor = std::move(t);
    c.entries.push_back(std::move(e));
  }
  r.expect_end();
  return c;
}

std::vector<std::uint8_t> encode_checkpoint(const FlowModel& model) {
  TensorContainer c;
  c.magic = "FCKP";
  c.dim = static_cast<std::uint32_t>(model.dim);
  c.blocks = static_cast<std::uint32_t>(model.num_blocks());
  c.hidden = static_cast<std::uint32_t>(model.hidden);
  for (const auto& p : parameters(model)) c.entries.push_back({p.name, *p.tensor});
  const double clamp = model.blocks.empty() ? kDefaultScaleClamp : model.blocks[0].scale_clamp;
  c.entries.push_back({"scale_clamp", Tensor::scalar(clamp)});
  return encode_container(c);
}

FlowModel decode_checkpoint(std::span<const std::uint8_t> bytes) {
  const TensorContainer c = decode_container(bytes, "FCKP");
  const double clamp = c.get("scale_clamp").item();
  // Build a skeleton of the declared shape, then overwrite every parameter.
  FlowModel model = init_model(c.dim, c.blocks, c.hidden, 0, clamp);
  for (auto& p : parameters(model)) {
    const Tensor& stored = c.get(p.name);
    if (stored.shape() != p.tensor->shape()) {
      throw FormatError("entry '" + p.name + "' has shape " + nd::shape_string(stored.shape()) +
                            ", expected " + nd::shape_string(p.tensor->shape()),
                        0);
    }
    *p.tensor = stored;
  }
  return model;
}

void save_checkpoint(const FlowModel& model, const std::string& path) {
  io::write_file(path, encode_checkpoint(model));
}

FlowModel load_checkpoint(const std::string& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace flowcon
