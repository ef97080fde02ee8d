#pragma once

#include <stdexcept>
#include <string>

namespace topics {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParseError : Error {
    ParseError(const std::string& msg, long line)
        : Error(msg + " (line " + std::to_string(line) + ")"), line(line) {}
    long line;
};

struct ValidationError : Error {
    using Error::Error;
};

}  // namespace topics
