#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace maskmatch {

// Root of every error raised by the toolkit. The CLI maps the three
// intermediate categories onto exit codes (data 2, model/training 3).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DataError : public Error {
public:
    using Error::Error;
};

class ModelError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Errors that point at a specific line of an input file.
class LineError : public DataError {
public:
    LineError(const std::string& message, std::size_t line)
        : DataError(message + " (line " + std::to_string(line) + ")"), message_(message), line_(line) {}

    std::size_t line() const noexcept { return line_; }
    const std::string& message() const noexcept { return message_; }

private:
    std::string message_;
    std::size_t line_;
};

// face_geometry
class NoFaceFound : public DataError {
public:
    NoFaceFound() : DataError("no face found") {}
    using DataError::DataError;
};

class LandmarkFailure : public DataError {
public:
    using DataError::DataError;
};

class DegenerateHull : public DataError {
public:
    using DataError::DataError;
};

// dataset_registry
class ManifestParseError : public LineError {
public:
    using LineError::LineError;
};

class DuplicateImageId : public LineError {
public:
    using LineError::LineError;
};

class InsufficientIdentities : public DataError {
public:
    using DataError::DataError;
};

// pair_protocol
class ExhaustedDataset : public DataError {
public:
    using DataError::DataError;
};

class InsufficientPairs : public DataError {
public:
    using DataError::DataError;
};

class PairListFormatError : public LineError {
public:
    using LineError::LineError;
};

// verifier_model / training
class ShapeMismatch : public ModelError {
public:
    using ModelError::ModelError;
};

class ChecksumError : public ModelError {
public:
    using ModelError::ModelError;
};

// evaluation
class EmptyPartition : public DataError {
public:
    EmptyPartition() : DataError("score set has an empty partition") {}
};

class MissingImage : public DataError {
public:
    MissingImage(const std::string& what, std::size_t pair_index)
        : DataError(what + " (pair " + std::to_string(pair_index) + ")"), pair_index_(pair_index) {}

    std::size_t pair_index() const noexcept { return pair_index_; }

private:
    std::size_t pair_index_;
};

}  // namespace maskmatch
