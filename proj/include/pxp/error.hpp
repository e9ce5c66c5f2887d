#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pxp {

/// Machine-readable error categories. The first four are the codes the HTTP
/// service reports; the rest map onto CLI exit codes.
enum class ErrorCode {
    validation,
    not_found,
    conflict,
    timeout,
    parse,
    config,
    transport,
    contract,
};

std::string_view error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::vector<std::string> fields = {})
        : std::runtime_error(message), code_(code), fields_(std::move(fields)) {}

    ErrorCode code() const noexcept { return code_; }

    /// Field paths (e.g. "session.k") implicated in a validation error.
    const std::vector<std::string>& fields() const noexcept { return fields_; }

    /// Transport failures are the only retryable category.
    bool retryable() const noexcept { return code_ == ErrorCode::transport; }

private:
    ErrorCode code_;
    std::vector<std::string> fields_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace pxp
