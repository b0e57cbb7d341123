#pragma once

#include <charconv>
#include <string>

#include "vitscope/error.hpp"

namespace vitscope {

// Shortest round-trip decimal form, locale-independent, so CSV artifacts are
// byte-stable across runs.
inline std::string fmt_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec != std::errc{})
        raise(ErrorCategory::Internal, "double formatting failed");
    return std::string(buf, res.ptr);
}

// Fixed-precision form for human-facing report text.
inline std::string fmt_fixed(double v, int digits) {
    char buf[64];
    const int len = std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return std::string(buf, buf + len);
}

}  // namespace vitscope
