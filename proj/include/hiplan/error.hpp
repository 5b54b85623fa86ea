#pragma once

#include <stdexcept>
#include <string>

namespace hiplan {

// Base for every error raised by the library. Subclasses map onto the CLI's
// exit codes (see pipeline.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class NotSolvedError : public Error {
 public:
  using Error::Error;
};

// Grammar-prior structural problems.
class DomainError : public Error {
 public:
  using Error::Error;
};

class StructureError : public Error {
 public:
  using Error::Error;
};

class UncalledSubroutineError : public StructureError {
 public:
  using StructureError::StructureError;
};

class BudgetError : public Error {
 public:
  using Error::Error;
};

class EmptyCorpusError : public Error {
 public:
  using Error::Error;
};

class MissingProgramError : public Error {
 public:
  using Error::Error;
};

class SupportMismatchError : public Error {
 public:
  using Error::Error;
};

class OptimizationError : public Error {
 public:
  using Error::Error;
};

}  // namespace hiplan
