#pragma once

#include <stdexcept>
#include <string>

namespace stt {

/// Base for every error the toolkit raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (bad JSON, missing key, wrong type).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Well-formed input that violates a documented invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the domain of an operation (e.g. t outside [0, t_c]).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A runtime invariant broke: inverted tube faces, a state escaped its
/// funnel, a non-positive tube width reached the controller.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

/// Tube synthesis could not produce a solution (bad degree, budget exhausted).
class SynthesisError : public Error {
 public:
  using Error::Error;
};

}  // namespace stt
