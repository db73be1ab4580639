#pragma once

#include <stdexcept>
#include <string>

namespace multiproc {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// partition
class PartitionError : public Error {
public:
    using Error::Error;
};
class OverlapError : public PartitionError {
public:
    using PartitionError::PartitionError;
};
class CoverageGapError : public PartitionError {
public:
    using PartitionError::PartitionError;
};
class LabelOutOfRange : public PartitionError {
public:
    using PartitionError::PartitionError;
};
class OutOfDomain : public PartitionError {
public:
    using PartitionError::PartitionError;
};
class DomainMismatch : public PartitionError {
public:
    using PartitionError::PartitionError;
};

// system / integration
class DimensionMismatch : public Error {
public:
    using Error::Error;
};
class NonFiniteState : public Error {
public:
    using Error::Error;
};

// pmp
class WrongTimeMode : public Error {
public:
    using Error::Error;
};

// examples
class WrongCase : public Error {
public:
    using Error::Error;
};
class DegenerateSeed : public Error {
public:
    using Error::Error;
};
class NoConvergence : public Error {
public:
    using Error::Error;
};
class OnBoundary : public Error {
public:
    using Error::Error;
};
class EntryNotOnBoundary : public Error {
public:
    using Error::Error;
};
class ControlOutOfRange : public Error {
public:
    using Error::Error;
};
class InvalidParams : public Error {
public:
    using Error::Error;
};

// cli
class ConfigError : public Error {
public:
    using Error::Error;
};
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace multiproc
