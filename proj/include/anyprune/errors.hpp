#pragma once

#include <stdexcept>
#include <string>

namespace anyprune {

// Every failure raised by the library derives from Error so callers can map
// the family to an exit code without enumerating each kind.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define ANYPRUNE_ERROR(Name)                  \
  class Name : public Error {                 \
   public:                                    \
    using Error::Error;                       \
  }

ANYPRUNE_ERROR(ShapeError);
ANYPRUNE_ERROR(LabelError);
ANYPRUNE_ERROR(TapeError);
ANYPRUNE_ERROR(NumericError);
ANYPRUNE_ERROR(SpecError);
ANYPRUNE_ERROR(ParameterError);
ANYPRUNE_ERROR(RefinementError);
ANYPRUNE_ERROR(DataError);
ANYPRUNE_ERROR(PartitionError);
ANYPRUNE_ERROR(IndexError);
ANYPRUNE_ERROR(LogError);
ANYPRUNE_ERROR(FormatError);
ANYPRUNE_ERROR(ParseError);
ANYPRUNE_ERROR(IoError);

#undef ANYPRUNE_ERROR

// Config errors carry the offending field so the CLI can point at it.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace anyprune
