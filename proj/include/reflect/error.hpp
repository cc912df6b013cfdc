#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace reflect {

/// Library-wide exception. `code()` is a stable kebab-case identifier
/// (e.g. "dimension-mismatch") that tools surface in machine-readable form.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

[[noreturn]] inline void fail(std::string code, const std::string& message) {
    throw Error(std::move(code), message);
}

inline void require(bool condition, const char* code, const std::string& message) {
    if (!condition) fail(code, message);
}

}  // namespace reflect
