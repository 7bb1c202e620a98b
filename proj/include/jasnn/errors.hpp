// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace jasnn {

// Every error carries a short machine-readable category that the CLI prints as
// a prefix ("error[dimension]: ...") and maps to an exit code.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& what)
        : std::runtime_error(what), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

private:
    std::string category_;
};

class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& what) : Error("dimension", what) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error("config", what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error("data", what) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error("numeric", what) {}
};

class SerializationError : public Error {
public:
    explicit SerializationError(const std::string& what) : Error("serialization", what) {}
};

class StatisticsError : public Error {
public:
    explicit StatisticsError(const std::string& what) : Error("statistics", what) {}
};

class TapeError : public Error {
public:
    explicit TapeError(const std::string& what) : Error("tape", what) {}
};

} // namespace jasnn
