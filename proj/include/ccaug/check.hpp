#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

namespace ccaug {

// Runtime contract violation (bad shapes, bad files, out-of-range labels, ...).
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

template <typename T>
bool all_finite(std::span<const T> values) {
  for (const T& v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace ccaug

#define CCAUG_CHECK(cond, msg)          \
  do {                                  \
    if (!(cond)) ::ccaug::fail((msg));  \
  } while (0)
