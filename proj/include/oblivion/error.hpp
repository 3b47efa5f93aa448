#ifndef OBLIVION_ERROR_HPP
#define OBLIVION_ERROR_HPP

#include <stdexcept>
#include <string>

namespace oblivion {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class LayoutMismatch : public Error {
 public:
  using Error::Error;
};

class NonFiniteValue : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss; the run must be aborted.
class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class StoreError : public Error {
 public:
  using Error::Error;
};

class ChecksumMismatch : public StoreError {
 public:
  using StoreError::StoreError;
};

/// Raised by the trend estimators when a series cannot be analysed
/// (too short, zero fluctuation, singular fit).
class DegenerateSeries : public Error {
 public:
  using Error::Error;
};

}  // namespace oblivion

#endif  // OBLIVION_ERROR_HPP
