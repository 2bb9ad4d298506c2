#pragma once

#include <Eigen/Dense>

namespace fedfmc {

// Dynamic-size dense types. Feature matrices are row-major so one example is
// one contiguous row.
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using RowMatrixX =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Vector = VectorX<double>;
using Matrix = MatrixX<double>;
using RowMatrix = RowMatrixX<double>;
using IndexVector = Eigen::Matrix<int, Eigen::Dynamic, 1>;

}  // namespace fedfmc
