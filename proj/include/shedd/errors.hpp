#pragma once

#include <stdexcept>
#include <string>

namespace shedd {

/// Tensor extents disagree with what an operation requires.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A call violated an API precondition (e.g. backward on a non-scalar).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Configuration file is missing a field, has an unknown one, or a bad value.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dataset manifest is malformed or disagrees with its payload.
class ManifestError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dataset payload is truncated or fails its checksum.
class CorruptDatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A dataset cannot satisfy a request (too few samples per class, empty set).
class InsufficientDataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace shedd
