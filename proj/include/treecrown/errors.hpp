#pragma once

#include <stdexcept>
#include <string>

namespace treecrown {

// Bad or missing input data (files, schemas, parameter ranges).
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem / IO failures.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// External segmenter unreachable or misbehaving after retries.
class SegmenterError : public std::runtime_error {
public:
    explicit SegmenterError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace treecrown
