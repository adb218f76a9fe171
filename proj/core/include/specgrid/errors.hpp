#ifndef SPECGRID_ERRORS_HPP
#define SPECGRID_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace specgrid {

/// Malformed or inconsistent input data (missing files, bad schemas,
/// out-of-range values). Maps to CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// A runtime check on the pipeline's own guarantees failed (conservation,
/// fold separation, non-finite activations). Maps to CLI exit code 3.
class InvariantError : public std::runtime_error {
 public:
  explicit InvariantError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace specgrid

#endif  // SPECGRID_ERRORS_HPP
