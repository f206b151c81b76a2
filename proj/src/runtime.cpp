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

#include "flowcon/runtime.hpp"

#include <omp.h>

#include <cstdlib>
#include <iostream>
#include <string>

namespace flowcon {

namespace {
int g_threads = 0;  // 0 = not configured yet
WarningHandler g_warning;
}

int worker_threads() {
  if (g_threads == 0) g_threads = omp_get_max_threads();
  return g_threads;
}

void set_worker_threads(int n) {
  g_threads = n < 1 ? 1 : n;
  omp_set_num_threads(g_threads);
}

int configure_threads_from_env() {
  int n = omp_get_num_procs();
  if (const char* env = std::getenv("FLOWCON_THREADS"); env && *env) {
    try {
      n = std::stoi(env);
    } catch (const std::exception&) {
      // ignore malformed values and keep the default
    }
  }
  set_worker_threads(n);
  return g_threads;
}

void set_warning_handler(WarningHandler handler) { g_warning = std::move(handler); }

void warn(const std::string& message) {
  if (g_warning) {
    g_warning(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

WarningCapture::WarningCapture() {
  set_warning_handler([this](const std::string& m) { messages_.push_back(m); });
}

WarningCapture::~WarningCapture() { set_warning_handler(nullptr); }

}  // namespace flowcon
