#pragma once

#include <stdexcept>
#include <string>

namespace viclevr {

/// Base of all toolkit errors. The CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input file could not be read or parsed as JSON.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// JSON is well-formed but a field is missing or ill-typed. The message starts
/// with the JSON pointer of the offending value.
class SchemaError : public Error {
 public:
  SchemaError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// Cross-record constraint violated (dangling reference, duplicate id).
class IntegrityError : public Error {
 public:
  using Error::Error;
};

}  // namespace viclevr
