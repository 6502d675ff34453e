// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace xamba {

// Mirrors xamba_status in the C header; values must stay in sync.
enum class ErrorCode : int {
    Shape = 1,
    Parameter = 2,
    Numeric = 3,
    Format = 4,
    Io = 5,
    Unsupported = 6,
    Corruption = 7,
    Config = 8,
    Signature = 9,
    Internal = 10,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& msg)
        : std::runtime_error(msg), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) {
    throw Error(code, msg);
}

} // namespace xamba
