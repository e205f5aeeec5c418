// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace counselforge {

/// Root of every error the library raises on purpose.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller broke an operation's documented precondition.
class PreconditionError : public Error {
public:
    using Error::Error;
};

class TransportError : public Error {
public:
    TransportError(const std::string& what, bool transient) : Error(what), transient_(transient) {}
    [[nodiscard]] bool transient() const noexcept { return transient_; }

private:
    bool transient_;
};

class ProtocolError : public Error {
public:
    using Error::Error;
};

/// The service refused the request content (e.g. a prompt blocked by the image service).
class ContentError : public Error {
public:
    using Error::Error;
};

class RangeError : public ProtocolError {
public:
    using ProtocolError::ProtocolError;
};

class NormError : public ProtocolError {
public:
    NormError(const std::string& what, double deviation) : ProtocolError(what), deviation_(deviation) {}
    [[nodiscard]] double deviation() const noexcept { return deviation_; }

private:
    double deviation_;
};

class GenerationError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    explicit ParseError(const std::string& what, std::vector<std::size_t> lines = {})
        : Error(what), lines_(std::move(lines)) {}
    /// 1-based line numbers of the offending input lines, when known.
    [[nodiscard]] const std::vector<std::size_t>& lines() const noexcept { return lines_; }

private:
    std::vector<std::size_t> lines_;
};

class NoMatchError : public Error {
public:
    using Error::Error;
};

class UnknownTechniqueError : public Error {
public:
    using Error::Error;
};

class JudgeParseError : public Error {
public:
    using Error::Error;
};

class MissingImageError : public Error {
public:
    using Error::Error;
};

class DimensionMismatchError : public Error {
public:
    using Error::Error;
};

class DegenerateVarianceError : public Error {
public:
    using Error::Error;
};

class LengthMismatchError : public Error {
public:
    using Error::Error;
};

class MissingBaselineError : public Error {
public:
    using Error::Error;
};

class MissingPlanError : public Error {
public:
    using Error::Error;
};

class EmptyCorpusError : public Error {
public:
    using Error::Error;
};

class StorageError : public Error {
public:
    using Error::Error;
};

class TaggerError : public Error {
public:
    using Error::Error;
};

class SchemaError : public Error {
public:
    SchemaError(const std::string& what, std::size_t line) : Error(what), line_(line) {}
    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

} // namespace counselforge
