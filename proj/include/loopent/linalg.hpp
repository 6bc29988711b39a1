#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>

namespace loopent {

using Mat2 = Eigen::Matrix2d;
using Mat4 = Eigen::Matrix4d;
using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;
using Mat42 = Eigen::Matrix<double, 4, 2>;
using cplx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

template <typename Derived>
auto symmetrized(const Eigen::MatrixBase<Derived>& m) {
  return (0.5 * (m + m.transpose())).eval();
}

inline Mat4 block_diag(const Mat2& a, const Mat2& b) {
  Mat4 m = Mat4::Zero();
  m.topLeftCorner<2, 2>() = a;
  m.bottomRightCorner<2, 2>() = b;
  return m;
}

inline double max_abs(const Mat4& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace loopent
