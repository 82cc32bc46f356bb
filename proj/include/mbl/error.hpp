#pragma once

#include <stdexcept>
#include <string>

namespace mbl {

/// Raised for every contract violation or bad input in the library. The CLI
/// maps it to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An Error annotated with the pipeline stage that produced it
/// ("metric", "match", "outcome_model", "impute", "search", ...).
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error(stage + ": " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace mbl
