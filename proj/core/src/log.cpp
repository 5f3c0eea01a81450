#include "secoco/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

#include "secoco/common.hpp"

namespace secoco::log {
namespace {

std::atomic<int>& current() {
  static std::atomic<int> lvl = [] {
    const char* env = std::getenv("SECOCO_LOG");
    if (env == nullptr || *env == '\0') return static_cast<int>(Level::kInfo);
    try {
      return static_cast<int>(parse_level(env));
    } catch (const ConfigError&) {
      return static_cast<int>(Level::kInfo);
    }
  }();
  return lvl;
}

constexpr const char* kNames[] = {"error", "warn", "info", "debug"};

}  // namespace

Level parse_level(std::string_view s) {
  for (int i = 0; i < 4; ++i) {
    if (s == kNames[i] || s == std::to_string(i)) return static_cast<Level>(i);
  }
  throw ConfigError("unknown log level '" + std::string(s) + "'");
}

Level level() { return static_cast<Level>(current().load()); }
void set_level(Level l) { current().store(static_cast<int>(l)); }

void write(Level l, std::string_view message) {
  if (static_cast<int>(l) > current().load()) return;
  static std::mutex mu;
  std::lock_guard lock(mu);
  std::cerr << "[" << kNames[static_cast<int>(l)] << "] " << message << '\n';
}

}  // namespace secoco::log
