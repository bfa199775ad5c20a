// Copyright the maskhash authors. Licensed under the terms of the Apache 2.0 license. See LICENSE in the project root.

#pragma once

#include <stdexcept>
#include <string>

namespace maskhash {

// Failure classes map 1:1 onto process exit codes and C API status values.
enum class ErrorKind : int {
    config = 2,
    data = 3,
    numeric = 4,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), _kind(kind) {}

    ErrorKind kind() const noexcept { return _kind; }
    int exit_code() const noexcept { return static_cast<int>(_kind); }

    static Error config(const std::string& message) { return {ErrorKind::config, message}; }
    static Error data(const std::string& message) { return {ErrorKind::data, message}; }
    static Error numeric(const std::string& message) { return {ErrorKind::numeric, message}; }

private:
    ErrorKind _kind;
};

} // namespace maskhash
