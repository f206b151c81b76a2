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
#include <random>
#include <string_view>

namespace flowcon {

using Rng = std::mt19937_64;

/// Independent generator for a named purpose ("init", "shuffle", "synth",
/// "subsample", ...) derived from one master seed. `index` separates repeated
/// uses of the same purpose (epoch number, OOD set number).
inline Rng substream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0) {
  // FNV-1a over the name, then splitmix64 finalisation of the mix.
  std::uint64_t h = 1469598103934665603ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  std::uint64_t x = seed ^ (h + 0x9e3779b97f4a7c15ULL + (index << 6) + (index >> 2));
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return Rng(x);
}

}  // namespace flowcon
