#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace weakbsde {

using Scalar = double;
using idx_t = Eigen::Index;

// Coefficient-wise arrays are the working types: paths live in columns of
// time-indexed matrices, reductions run over columns.
using Vec = Eigen::ArrayXd;
using Mat = Eigen::ArrayXXd;

// Linear-algebra types for the regression kernels.
using DVec = Eigen::VectorXd;
using DMat = Eigen::MatrixXd;

}  // namespace weakbsde
