#pragma once

#include <complex>
#include <Eigen/Dense>

namespace dflearn {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;
using IntMatrix = Eigen::MatrixXi;

inline constexpr double kProbabilityFloor = 1e-12;

}  // namespace dflearn
