// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace actionspotter {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or truncated on-disk data.
class LoadError : public Error {
public:
    enum class Kind { Io, MalformedHeader, TruncatedPayload, NonFinite, Schema };

    LoadError(Kind kind, const std::string &what) : Error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// Data loaded fine but violates a domain invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A record references a video that is not part of the ground truth.
class CrossReferenceError : public Error {
public:
    using Error::Error;
};

/// Caller broke a precondition (unsorted input, stepping a finished episode, shape mismatch).
class ContractViolation : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class RangeError : public Error {
public:
    using Error::Error;
};

/// Reward requested from an episode that has no annotation.
class RewardUnavailable : public Error {
public:
    using Error::Error;
};

/// Checkpoint file is unreadable or does not fit the model/dataset it is used with.
class CheckpointError : public Error {
public:
    using Error::Error;
};

} // namespace actionspotter
