#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mlwb {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Incompatible tensor or layer shapes.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid or missing configuration value (unknown activation, missing initializer param, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A caller broke an operation's precondition (non-scalar loss, no conv layer for GradCAM, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Malformed text input. Carries the byte offset and a structural path of the first violation.
class ParseError : public Error {
public:
    ParseError(const std::string& message, std::size_t offset, std::string path = {})
        : Error(message), offset_(offset), path_(std::move(path)) {}

    std::size_t offset() const noexcept { return offset_; }
    const std::string& path() const noexcept { return path_; }

private:
    std::size_t offset_;
    std::string path_;
};

}  // namespace mlwb
