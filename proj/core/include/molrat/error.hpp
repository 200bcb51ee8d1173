//
// molrat - rationale-based multi-objective molecule generation
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace molrat {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed or chemically invalid graph construction.
class GraphError : public Error {
public:
  using Error::Error;
};

class ParseError : public Error {
public:
  ParseError(std::size_t position, const std::string &cause)
      : Error("SMILES parse error at position " + std::to_string(position) + ": " + cause),
        position_(position), cause_(cause) {}

  std::size_t position() const { return position_; }
  const std::string &cause() const { return cause_; }

private:
  std::size_t position_;
  std::string cause_;
};

/// Input exceeds the size bound of an exact combinatorial search.
class ResourceError : public Error {
public:
  using Error::Error;
};

/// Shape mismatch or non-finite values in the tensor substrate.
class NumericError : public Error {
public:
  using Error::Error;
};

/// Missing or incompatible pipeline artifact.
class ArtifactError : public Error {
public:
  using Error::Error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

}  // namespace molrat
