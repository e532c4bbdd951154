#pragma once

#include <stdexcept>
#include <string>

namespace caipi {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller supplied an argument that violates a precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A file could not be decoded; the message names the file.
class DecodeError : public Error {
 public:
  using Error::Error;
};

/// An operation needs decisive pixels but the mask selects none.
class EmptyMaskError : public InvalidArgument {
 public:
  EmptyMaskError() : InvalidArgument("mask selects no pixels") {}
};

class FrameFitExhausted : public Error {
 public:
  explicit FrameFitExhausted(int attempts)
      : Error("no transform fitting the frame after " + std::to_string(attempts) +
              " attempts (feature region too large; clamp scale to <= 1)") {}
};

/// The interactive session was driven out of order (query pending, budget used, ...).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace caipi
