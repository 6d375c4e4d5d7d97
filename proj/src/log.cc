/* Copyright 2026 The tpflex Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "tpflex/log.h"

#include <cstdlib>
#include <mutex>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace tpflex {
namespace {

std::shared_ptr<spdlog::logger> logger() {
  static std::once_flag once;
  static std::shared_ptr<spdlog::logger> lg;
  std::call_once(once, [] {
    lg = spdlog::stderr_color_mt("tpflex");
    lg->set_pattern("[%l] %v");
    const char* env = std::getenv("TPFLEX_LOG");
    lg->set_level(env ? spdlog::level::from_str(env) : spdlog::level::warn);
  });
  return lg;
}

}  // namespace

void init_logging() { logger(); }

void log_warn(const std::string& msg) { logger()->warn(msg); }
void log_info(const std::string& msg) { logger()->info(msg); }
void log_debug(const std::string& msg) { logger()->debug(msg); }

}  // namespace tpflex
