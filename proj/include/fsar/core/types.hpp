#ifndef FSAR_CORE_TYPES_HPP
#define FSAR_CORE_TYPES_HPP

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fsar {

/// Dense row-major matrix, the working type for every token matrix in the head.
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
using ColVec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatD = Mat<double>;
using MatF = Mat<float>;

/// Raised when an input lies outside an operation's mathematical domain.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Raised when operand shapes are inconsistent.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Raised for malformed archive content (indices, headers, manifests).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised for file-system failures; the message always carries the path.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string shape_str(Eigen::Index rows, Eigen::Index cols) {
  return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
}

}  // namespace fsar

#endif  // FSAR_CORE_TYPES_HPP
