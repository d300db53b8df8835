#pragma once

#include <stdexcept>
#include <string>

namespace spdheat {

// Two failure families, mirrored by the CLI exit codes: invalid inputs or
// configuration (exit 1) versus numerical breakdown at runtime (exit 2).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

class NotSpdError : public NumericalError {
 public:
  explicit NotSpdError(const std::string& msg) : NumericalError(msg) {}
};

class NotRotationError : public ValidationError {
 public:
  explicit NotRotationError(const std::string& msg) : ValidationError(msg) {}
};

class ConvergenceError : public NumericalError {
 public:
  explicit ConvergenceError(const std::string& msg) : NumericalError(msg) {}
};

class NearAntipodalError : public NumericalError {
 public:
  explicit NearAntipodalError(const std::string& msg) : NumericalError(msg) {}
};

class SolverDivergedError : public NumericalError {
 public:
  explicit SolverDivergedError(const std::string& msg) : NumericalError(msg) {}
};

class NonFiniteLossError : public NumericalError {
 public:
  explicit NonFiniteLossError(const std::string& msg) : NumericalError(msg) {}
};

class InvalidResolutionError : public ValidationError {
 public:
  explicit InvalidResolutionError(const std::string& msg) : ValidationError(msg) {}
};

class ShapeMismatchError : public ValidationError {
 public:
  explicit ShapeMismatchError(const std::string& msg) : ValidationError(msg) {}
};

class TooFewSamplesError : public ValidationError {
 public:
  explicit TooFewSamplesError(const std::string& msg) : ValidationError(msg) {}
};

class EmptyBatchError : public ValidationError {
 public:
  explicit EmptyBatchError(const std::string& msg) : ValidationError(msg) {}
};

class DegenerateSampleError : public NumericalError {
 public:
  explicit DegenerateSampleError(const std::string& msg) : NumericalError(msg) {}
};

class DegenerateSupportError : public NumericalError {
 public:
  explicit DegenerateSupportError(const std::string& msg) : NumericalError(msg) {}
};

class ZeroReferenceError : public NumericalError {
 public:
  explicit ZeroReferenceError(const std::string& msg) : NumericalError(msg) {}
};

class ManifestError : public ValidationError {
 public:
  explicit ManifestError(const std::string& msg) : ValidationError(msg) {}
};

}  // namespace spdheat
