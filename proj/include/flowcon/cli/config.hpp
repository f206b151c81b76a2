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

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "flowcon/errors.hpp"
#include "flowcon/train.hpp"

namespace flowcon::cli {

class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// Flat key=value run description. Lines are `key = value`; `#` starts a
/// comment. Unknown keys and malformed values are rejected with the line.
struct RunConfig {
  // paths
  std::string train_features;
  std::string out_dir;
  std::string resume_from;  // checkpoint to continue; its .fcos must sit beside it

  // model shape; dim 0 = take it from the training features, hidden 0 = default width
  std::size_t dim = 0;
  std::size_t blocks = 8;
  std::size_t hidden = 0;
  double scale_clamp = 2.0;

  TrainConfig train;

  /// Applies one `key=value` pair. `where` prefixes error messages.
  void set(std::string_view key, std::string_view value, const std::string& where = "");
  void validate() const;

  std::string to_text() const;
};

RunConfig parse_config(std::string_view text, const std::string& source = "<config>");
RunConfig load_config(const std::string& path);

/// Splits "key=value"; throws ConfigError otherwise.
std::pair<std::string, std::string> split_assignment(std::string_view s);

}  // namespace flowcon::cli
