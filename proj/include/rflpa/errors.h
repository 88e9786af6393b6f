// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace rflpa {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid parameters rejected at configuration time.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A value does not fit in the signed range of the field.
class OverflowError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

// Reed-Solomon / interpolation failure.
class DecodeError : public Error {
 public:
  using Error::Error;
};

// Signature, MAC or authenticated-decryption failure.
class AuthError : public Error {
 public:
  using Error::Error;
};

// Fewer respondents than the round threshold.
class ThresholdError : public Error {
 public:
  using Error::Error;
};

}  // namespace rflpa
