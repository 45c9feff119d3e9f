// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#include "bmae/common.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace bmae {

namespace {
std::atomic<int> g_level{static_cast<int>(LogLevel::Info)};
std::mutex g_log_mutex;

const char* level_tag(LogLevel level) {
    switch (level) {
    case LogLevel::Debug: return "debug";
    case LogLevel::Info: return "info";
    case LogLevel::Warn: return "warn";
    case LogLevel::Error: return "error";
    case LogLevel::Silent: break;
    }
    return "";
}
} // namespace

void set_log_level(LogLevel level) { g_level.store(static_cast<int>(level)); }

LogLevel log_level() { return static_cast<LogLevel>(g_level.load()); }

void log(LogLevel level, const std::string& message) {
    if (static_cast<int>(level) < g_level.load() || level == LogLevel::Silent)
        return;
    std::lock_guard<std::mutex> lock(g_log_mutex);
    std::cerr << "[bmae " << level_tag(level) << "] " << message << '\n';
}

} // namespace bmae
