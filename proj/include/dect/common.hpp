#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dect {

// Error categories map 1:1 onto the CLI exit codes.
enum class ErrorKind {
    config,    // exit 2: malformed config/schema/parse problems
    mismatch,  // exit 3: inconsistent dimensions, geometry, or inputs
    numeric,   // exit 4: numerical failure (non-finite, divergence, ...)
    io         // exit 5: filesystem failure
};

// Fine-grained reason codes for file parsing failures.
enum class IoCode {
    none,
    bad_magic,
    bad_version,
    bad_header,
    truncated,
    too_large,
    ragged_row,
    bad_number,
    open_failed,
    write_failed
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string message, IoCode code = IoCode::none)
        : std::runtime_error(std::move(message)), kind_(kind), code_(code) {}

    ErrorKind kind() const { return kind_; }
    IoCode code() const { return code_; }

    int exit_code() const {
        switch (kind_) {
        case ErrorKind::config: return 2;
        case ErrorKind::mismatch: return 3;
        case ErrorKind::numeric: return 4;
        case ErrorKind::io: return 5;
        }
        return 1;
    }

private:
    ErrorKind kind_;
    IoCode code_;
};

}  // namespace dect
