#pragma once

#include <stdexcept>
#include <string>

namespace pmd {

/// Bad input: out-of-range probabilities, malformed datasets, bad configs.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Transport failure after the configured retries were spent.
class BackendUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The provider refused the request (e.g. a content filter). The example is
/// skipped rather than counted as an error.
class ContentFiltered : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pmd
