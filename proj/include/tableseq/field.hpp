// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

namespace tableseq {

/// Dense row-major 2-D array used for images, structure maps and tensors.
template <typename Scalar>
using Field = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

}  // namespace tableseq
