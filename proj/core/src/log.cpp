#include "graphshield/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

#include "graphshield/errors.hpp"

namespace gshield {

namespace {
std::atomic<LogLevel> g_level{LogLevel::kWarn};
std::mutex g_mu;

const char* prefix(LogLevel level) {
  switch (level) {
    case LogLevel::kError: return "[error] ";
    case LogLevel::kWarn: return "[warn] ";
    case LogLevel::kInfo: return "[info] ";
    case LogLevel::kDebug: return "[debug] ";
  }
  return "";
}
}  // namespace

void set_log_level(LogLevel level) { g_level.store(level); }
LogLevel log_level() { return g_level.load(); }

LogLevel parse_log_level(const std::string& name) {
  if (name == "error") return LogLevel::kError;
  if (name == "warn") return LogLevel::kWarn;
  if (name == "info") return LogLevel::kInfo;
  if (name == "debug") return LogLevel::kDebug;
  throw UsageError("unknown log level \"" + name + "\"");
}

void log_message(LogLevel level, const std::string& message) {
  if (level > g_level.load()) return;
  std::lock_guard lock(g_mu);
  std::cerr << prefix(level) << message << '\n';
}

}  // namespace gshield
