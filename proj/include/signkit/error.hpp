#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace signkit {

/// Base of every error the toolkit raises for bad input. Anything else
/// escaping the library is an internal fault.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed document (XML syntax, CSV structure). Carries the byte offset
/// or line number where the problem was detected.
class parse_error : public error {
public:
    parse_error(const std::string& what, std::size_t position)
        : error(what), position_(position) {}

    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

/// Well-formed document that lacks a required element or column.
class schema_error : public error {
public:
    using error::error;
};

/// Value-level constraint violation (degenerate box, out-of-bounds box, bad score).
class validation_error : public error {
public:
    using error::error;
};

class io_error : public error {
public:
    using error::error;
};

} // namespace signkit
