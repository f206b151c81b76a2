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

#include <functional>
#include <string>
#include <vector>

namespace flowcon {

/// Number of worker threads used by the parallel kernels.
int worker_threads();

/// Caps the worker pool. Values < 1 are treated as 1.
void set_worker_threads(int n);

/// Reads FLOWCON_THREADS (default: all available cores). Returns the value
/// applied. A value of 1 selects the serial kernels everywhere.
int configure_threads_from_env();

/// Non-fatal conditions (omitted classes, OOD shortfall, ...) are reported
/// here. The default handler prints to stderr.
using WarningHandler = std::function<void(const std::string&)>;
void set_warning_handler(WarningHandler handler);
void warn(const std::string& message);

/// Collects warnings for the lifetime of the object, then restores stderr.
class WarningCapture {
 public:
  WarningCapture();
  ~WarningCapture();
  WarningCapture(const WarningCapture&) = delete;
  WarningCapture& operator=(const WarningCapture&) = delete;

  const std::vector<std::string>& messages() const noexcept { return messages_; }

 private:
  std::vector<std::string> messages_;
};

}  // namespace flowcon
