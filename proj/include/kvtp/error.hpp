// Copyright (C) 2026 KVTP contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace kvtp {

// Values double as CLI exit codes.
enum class ErrorCode {
    InvalidArgument = 1,
    Format = 2,
    Numerical = 3,
    Client = 4,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message) : std::runtime_error(message), m_code(code) {}

    ErrorCode code() const noexcept {
        return m_code;
    }

private:
    ErrorCode m_code;
};

inline void require(bool condition, const std::string& message, ErrorCode code = ErrorCode::InvalidArgument) {
    if (!condition) {
        throw Error(code, message);
    }
}

}  // namespace kvtp
