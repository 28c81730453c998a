#pragma once

#include <stdexcept>
#include <string>

namespace qtt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Index, axis or region outside its valid range.
class RangeError : public Error {
public:
    using Error::Error;
};

/// Extents that do not agree (reshape, concatenation, stacking).
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Non-finite or otherwise unusable numerical input.
class DataError : public Error {
public:
    using Error::Error;
};

/// Malformed TT rank chain or core shapes.
class StructureError : public Error {
public:
    using Error::Error;
};

/// Materialization would exceed the configured memory cap.
class CapacityError : public Error {
public:
    using Error::Error;
};

/// Tensorization plan cannot be built or does not match the data.
class PlanError : public Error {
public:
    using Error::Error;
};

/// Segments that cannot be merged.
class MergeError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration, including error-budget exhaustion.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Snapshot ingestion failure.
class IngestionError : public Error {
public:
    using Error::Error;
};

/// Bad magic, version or truncated binary file.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Metric undefined for the given data (constant series, zero norm).
class DegenerateError : public Error {
public:
    using Error::Error;
};

}  // namespace qtt
