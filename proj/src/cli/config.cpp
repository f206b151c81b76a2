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

#include "flowcon/cli/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace flowcon::cli {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::string label(const std::string& where, std::string_view key) {
  return (where.empty() ? "" : where + ": ") + std::string(key);
}

double parse_double(std::string_view key, std::string_view v, const std::string& where) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(label(where, key) + ": expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

std::uint64_t parse_uint(std::string_view key, std::string_view v, const std::string& where) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(label(where, key) + ": expected a non-negative integer, got '" +
                      std::string(v) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v, const std::string& where) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(label(where, key) + ": expected true or false, got '" + std::string(v) + "'");
}

}  // namespace

std::pair<std::string, std::string> split_assignment(std::string_view s) {
  const auto eq = s.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("expected key=value, got '" + std::string(s) + "'");
  }
  const auto key = trim(s.substr(0, eq));
  if (key.empty()) throw ConfigError("empty key in '" + std::string(s) + "'");
  return {std::string(key), std::string(trim(s.substr(eq + 1)))};
}

void RunConfig::set(std::string_view key, std::string_view value, const std::string& where) {
  auto num = [&] { return parse_double(key, value, where); };
  auto uint = [&] { return parse_uint(key, value, where); };
  auto& t = train;
  if (key == "train_features") train_features = value;
  else if (key == "out_dir") out_dir = value;
  else if (key == "resume_from") resume_from = value;
  else if (key == "d") dim = uint();
  else if (key == "K") blocks = uint();
  else if (key == "h") hidden = uint();
  else if (key == "scale_clamp") scale_clamp = num();
  else if (key == "epochs") t.epochs = uint();
  else if (key == "batch_size") t.batch_size = uint();
  else if (key == "seed") t.seed = uint();
  else if (key == "checkpoint_every") t.checkpoint_every = uint();
  else if (key == "log_every") t.log_every = uint();
  else if (key == "lr") t.optimizer.lr = num();
  else if (key == "beta1") t.optimizer.beta1 = num();
  else if (key == "beta2") t.optimizer.beta2 = num();
  else if (key == "eps") t.optimizer.eps = num();
  else if (key == "weight_decay") t.optimizer.weight_decay = num();
  else if (key == "lambda") t.loss.lambda = num();
  else if (key == "tau1") t.loss.tau1 = num();
  else if (key == "tau2") t.loss.tau2 = num();
  else if (key == "exponent_clamp") t.loss.exponent_clamp = num();
  else if (key == "contrastive") t.loss.contrastive = parse_bool(key, value, where);
  else throw ConfigError(label(where, key) + ": unknown key");
}

void RunConfig::validate() const {
  if (train_features.empty()) throw ConfigError("missing required key 'train_features'");
  if (out_dir.empty()) throw ConfigError("missing required key 'out_dir'");
  if (dim == 1) throw ConfigError("d must be >= 2");
  if (blocks < 1) throw ConfigError("K must be >= 1");
  if (!(scale_clamp > 0.0)) throw ConfigError("scale_clamp must be > 0");
  try {
    train.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  const auto& t = train;
  os << "train_features = " << train_features << '\n'
     << "out_dir = " << out_dir << '\n';
  if (!resume_from.empty()) os << "resume_from = " << resume_from << '\n';
  os << "d = " << dim << '\n'
     << "K = " << blocks << '\n'
     << "h = " << hidden << '\n'
     << "scale_clamp = " << scale_clamp << '\n'
     << "epochs = " << t.epochs << '\n'
     << "batch_size = " << t.batch_size << '\n'
     << "seed = " << t.seed << '\n'
     << "checkpoint_every = " << t.checkpoint_every << '\n'
     << "log_every = " << t.log_every << '\n'
     << "lr = " << t.optimizer.lr << '\n'
     << "beta1 = " << t.optimizer.beta1 << '\n'
     << "beta2 = " << t.optimizer.beta2 << '\n'
     << "eps = " << t.optimizer.eps << '\n'
     << "weight_decay = " << t.optimizer.weight_decay << '\n'
     << "lambda = " << t.loss.lambda << '\n'
     << "tau1 = " << t.loss.tau1 << '\n'
     << "tau2 = " << t.loss.tau2 << '\n'
     << "exponent_clamp = " << t.loss.exponent_clamp << '\n'
     << "contrastive = " << (t.loss.contrastive ? "true" : "false") << '\n';
  return os.str();
}

RunConfig parse_config(std::string_view text, const std::string& source) {
  RunConfig cfg;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    std::pair<std::string, std::string> kv;
    try {
      kv = split_assignment(line);
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
    cfg.set(kv.first, kv.second, where);
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

}  // namespace flowcon::cli
