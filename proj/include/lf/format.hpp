#pragma once

#include <charconv>
#include <string>
#include <system_error>

namespace lf {

// Shortest round-trip decimal form via to_chars: locale-free, '.' decimal
// separator, byte-stable across runs.
inline std::string format_double(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

}  // namespace lf
