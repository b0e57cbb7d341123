#include "vitscope/error.hpp"

namespace vitscope {

const char* to_string(ErrorCategory cat) {
    switch (cat) {
        case ErrorCategory::Config: return "config";
        case ErrorCategory::Input: return "input";
        case ErrorCategory::Dimension: return "dimension";
        case ErrorCategory::State: return "state";
        case ErrorCategory::Format: return "format";
        case ErrorCategory::Render: return "render";
        case ErrorCategory::Training: return "training";
        case ErrorCategory::Metric: return "metric";
        case ErrorCategory::Contract: return "contract";
        case ErrorCategory::Tape: return "tape";
        case ErrorCategory::Stale: return "stale";
        case ErrorCategory::Io: return "io";
        case ErrorCategory::Internal: return "internal";
    }
    return "internal";
}

int exit_code(ErrorCategory cat) {
    switch (cat) {
        case ErrorCategory::Config: return 2;
        case ErrorCategory::Input: return 3;
        case ErrorCategory::Dimension: return 4;
        case ErrorCategory::State: return 5;
        case ErrorCategory::Format: return 6;
        case ErrorCategory::Render: return 7;
        case ErrorCategory::Training: return 8;
        case ErrorCategory::Metric: return 9;
        case ErrorCategory::Contract: return 10;
        case ErrorCategory::Tape: return 11;
        case ErrorCategory::Stale: return 12;
        case ErrorCategory::Io: return 13;
        case ErrorCategory::Internal: return 1;
    }
    return 1;
}

}  // namespace vitscope
