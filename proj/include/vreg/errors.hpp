#pragma once

#include <stdexcept>
#include <string>

namespace vreg {

// Every failure surfaces as an Error carrying a machine-parsable class id.
// The CLI prints them as "error: <class>: <message>" and exits nonzero.
class Error : public std::runtime_error {
public:
    Error(std::string cls, const std::string& msg)
        : std::runtime_error(msg), cls_(std::move(cls)) {}

    const std::string& error_class() const { return cls_; }

private:
    std::string cls_;
};

struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error("shape_error", msg) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error("numeric_error", msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error("config_error", msg) {}
};

struct IoError : Error {
    explicit IoError(const std::string& msg) : Error("io_error", msg) {}
};

struct FormatError : Error {
    explicit FormatError(const std::string& msg) : Error("format_error", msg) {}
};

struct UsageError : Error {
    explicit UsageError(const std::string& msg) : Error("usage_error", msg) {}
};

} // namespace vreg
