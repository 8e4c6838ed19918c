#pragma once

#include <stdexcept>
#include <string>

namespace sve {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand shapes are incompatible with the requested operation.
class DimensionError : public Error {
public:
    using Error::Error;
};

// An index (member, label, element) is out of range.
class IndexError : public Error {
public:
    using Error::Error;
};

// A value that was required to be finite is not, or a numeric
// post-condition failed.
class NumericError : public Error {
public:
    using Error::Error;
};

// An iterative method hit its iteration cap before reaching tolerance.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

// Invalid configuration; the message carries the offending field path.
class ConfigError : public Error {
public:
    using Error::Error;
};

// A binary file failed its magic/version/checksum checks.
class FormatError : public Error {
public:
    using Error::Error;
};

// A text file failed to parse; the message carries the line number.
class ParseError : public Error {
public:
    using Error::Error;
};

// The input object does not support the requested operation
// (e.g. a non-SVE checkpoint fed to a diversity dump).
class CapabilityError : public Error {
public:
    using Error::Error;
};

// A required input artifact (checkpoint, file) is missing.
class DependencyError : public Error {
public:
    using Error::Error;
};

// Filesystem read/write failure.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace sve
