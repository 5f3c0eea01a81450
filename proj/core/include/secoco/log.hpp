#ifndef SECOCO_LOG_HPP_
#define SECOCO_LOG_HPP_

#include <string_view>

namespace secoco::log {

enum class Level { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

// Read once from SECOCO_LOG (error|warn|info|debug or 0-3); defaults to info.
Level level();
void set_level(Level level);
Level parse_level(std::string_view s);

void write(Level level, std::string_view message);

inline void error(std::string_view m) { write(Level::kError, m); }
inline void warn(std::string_view m) { write(Level::kWarn, m); }
inline void info(std::string_view m) { write(Level::kInfo, m); }
inline void debug(std::string_view m) { write(Level::kDebug, m); }

}  // namespace secoco::log

#endif  // SECOCO_LOG_HPP_
