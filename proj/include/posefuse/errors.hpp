#ifndef POSEFUSE_ERRORS_HPP
#define POSEFUSE_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace posefuse {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// so3
struct NearPiRotation : Error { using Error::Error; };
struct GimbalLock : Error { using Error::Error; };
struct InvalidRange : Error { using Error::Error; };

// nncore / model
struct ShapeMismatch : Error { using Error::Error; };
struct BatchTooSmall : Error { using Error::Error; };
struct IndexOutOfRange : Error { using Error::Error; };

// train
struct EmptyDataset : Error { using Error::Error; };
struct BatchSmallerThanK : Error { using Error::Error; };

struct NanLoss : Error {
  std::string phase;
  int epoch;
  NanLoss(const std::string& phase_, int epoch_)
      : Error("non-finite loss in phase '" + phase_ + "' at epoch " + std::to_string(epoch_)),
        phase(phase_),
        epoch(epoch_) {}
};

// eval
struct EmptyCategory : Error { using Error::Error; };
struct InvalidK : Error { using Error::Error; };

// data / cli
struct InvalidConfig : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct SchemaError : Error { using Error::Error; };
struct CorruptCheckpoint : Error { using Error::Error; };
struct VersionMismatch : Error { using Error::Error; };

struct ParseError : Error {
  std::size_t line;
  std::size_t column;
  ParseError(const std::string& msg, std::size_t line_, std::size_t column_)
      : Error("line " + std::to_string(line_) + ", field " + std::to_string(column_) + ": " + msg),
        line(line_),
        column(column_) {}
};

}  // namespace posefuse

#endif
