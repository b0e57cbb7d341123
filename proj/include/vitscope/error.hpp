#pragma once

#include <stdexcept>
#include <string>

namespace vitscope {

// Error taxonomy shared by the library and the CLI. Each category maps to a
// distinct process exit code (see cli main).
enum class ErrorCategory {
    Config,     // invalid generation/run configuration
    Input,      // bad argument to an operation (out-of-range index, k > images)
    Dimension,  // tensor/grid shape mismatch
    State,      // operation needs an artifact or weights that are not loaded
    Format,     // malformed file (weights, manifest, matrix)
    Render,     // object cannot be rasterized
    Training,   // non-finite loss/gradient during optimization
    Metric,     // degenerate metric input (empty cluster)
    Contract,   // API contract violation (non-scalar loss, reused tape)
    Tape,       // backward on a detached graph
    Stale,      // artifact fingerprint does not match current config
    Io,         // filesystem failure
    Internal,
};

const char* to_string(ErrorCategory cat);
int exit_code(ErrorCategory cat);

class Error : public std::runtime_error {
public:
    Error(ErrorCategory cat, const std::string& msg)
        : std::runtime_error(msg), cat_(cat) {}

    ErrorCategory category() const { return cat_; }

private:
    ErrorCategory cat_;
};

[[noreturn]] inline void raise(ErrorCategory cat, const std::string& msg) {
    throw Error(cat, msg);
}

}  // namespace vitscope
