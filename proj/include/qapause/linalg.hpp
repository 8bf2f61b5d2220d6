#pragma once

#include <complex>

#include <Eigen/Dense>

namespace qapause {

using cplx = std::complex<double>;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

inline constexpr cplx kI{0.0, 1.0};

/// Dense matrix exponential by scaling and squaring with diagonal Padé
/// approximants of degree 3, 5, 7, 9 or 13, chosen from the 1-norm.
CMatrix expm(const CMatrix& a);

}  // namespace qapause
