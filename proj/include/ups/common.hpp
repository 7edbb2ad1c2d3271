// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace ups {

/// Row-major so that one sample is one contiguous row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// N x C matrix over {0,1}. Used for ground-truth labels, pseudo-labels and selection masks.
using BinaryMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Per-sample, per-class probabilities of a model.
using ProbMatrix = Matrix;
/// Per-sample, per-class uncertainty, same shape as a ProbMatrix.
using UncertaintyMatrix = Matrix;

enum class LabelMode { single_label, multi_label };

std::string to_string(LabelMode mode);
LabelMode parse_label_mode(const std::string& text);

// Error hierarchy. The three intermediate bases map onto CLI exit codes
// (usage/config = 1, data = 2, numerical/runtime = 3).

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};
class DataError : public Error {
 public:
  using Error::Error;
};
class NumericalError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public UsageError {
 public:
  using UsageError::UsageError;
};
class InvalidArchitecture : public UsageError {
 public:
  using UsageError::UsageError;
};
class InvalidParameter : public UsageError {
 public:
  using UsageError::UsageError;
};

class InvalidDataset : public DataError {
 public:
  using DataError::DataError;
};
class ParseError : public DataError {
 public:
  using DataError::DataError;
};
class SchemaError : public DataError {
 public:
  using DataError::DataError;
};
class EmptyInput : public DataError {
 public:
  using DataError::DataError;
};

class ShapeError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};
class EmptyBatch : public NumericalError {
 public:
  using NumericalError::NumericalError;
};
class EmptyMask : public NumericalError {
 public:
  using NumericalError::NumericalError;
};
class InvalidTarget : public NumericalError {
 public:
  using NumericalError::NumericalError;
};
class ScheduleExhausted : public NumericalError {
 public:
  using NumericalError::NumericalError;
};
class DegenerateEstimator : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace ups
