#pragma once

#include <stdexcept>
#include <string>

namespace odxu {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Input bytes do not follow the declared file format.
struct FormatError : Error { using Error::Error; };
// Stream ended in the middle of a record.
struct TruncationError : Error { using Error::Error; };
// Packet headers are internally inconsistent with the captured length.
struct ParseError : Error { using Error::Error; };
// Matrix / vector dimensions do not line up.
struct ShapeError : Error { using Error::Error; };
// The data cannot support the requested operation.
struct DataError : Error { using Error::Error; };
// Request exceeds a hard capacity bound.
struct CapacityError : Error { using Error::Error; };
// Filesystem or serialization failure.
struct IoError : Error { using Error::Error; };

} // namespace odxu
