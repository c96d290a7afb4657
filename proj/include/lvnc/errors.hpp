#pragma once

#include <stdexcept>
#include <string>

namespace lvnc {

/// Tensor extents or image sizes that do not fit together.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A caller broke a documented precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed file contents (raster, manifest, checkpoint).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input carries no information to work with, e.g. a constant image.
class DegenerateInputError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// PTA requested for a slice with no myocardium (TA + ELA = 0).
class UndefinedPtaError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace lvnc
