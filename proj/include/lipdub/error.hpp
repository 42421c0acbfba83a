#pragma once

#include <stdexcept>
#include <string>

namespace lipdub {

// Base class for every error the library raises on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A value failed one of its documented invariants. The message names the
// violated invariant.
struct ValidationError : Error {
    using Error::Error;
};

// File system or codec failure while reading/writing a bundle.
struct IoError : Error {
    using Error::Error;
};

// A manifest or config file does not match the documented schema
// (unknown fields, wrong version, wrong types, wrong sample rate, ...).
struct SchemaError : Error {
    using Error::Error;
};

// Geometric input admits no solution (collinear points, singular matrix,
// degenerate polygon).
struct DegenerateInput : Error {
    using Error::Error;
};

// A synthesis request violates one of the four leak-prevention rules.
// `channel` is 1..4.
struct LeakViolation : Error {
    int channel;
    LeakViolation(int ch, const std::string& msg)
        : Error("leak violation (channel " + std::to_string(ch) + "): " + msg), channel(ch) {}
};

}  // namespace lipdub
