#pragma once

#include <charconv>
#include <cstdio>
#include <string>

namespace adampnp::detail {

// Shortest round-trip decimal form of a double. Keeps emitted CSV/JSON
// byte-stable across runs and platforms using the same standard library.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec == std::errc()) return std::string(buf, res.ptr);
    int n = std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf, buf + n);
}

} // namespace adampnp::detail
