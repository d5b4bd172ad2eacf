#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace beamscope {

using cx = std::complex<double>;

using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using CRow = Eigen::RowVectorXcd;
using RVec = Eigen::VectorXd;
using RMat = Eigen::MatrixXd;
using RRow = Eigen::RowVectorXd;

constexpr double kPi = 3.14159265358979323846;

// Raised where a shrinkage derivative is requested exactly on the
// non-differentiable soft-threshold circle |r| = tau.
class boundary_error : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace beamscope
