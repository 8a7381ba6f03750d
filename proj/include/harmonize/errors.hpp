#pragma once

#include <stdexcept>

namespace harmonize {

/// A mask selected no pixels where at least one is required.
class EmptyRegionError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

class DatasetError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace harmonize
