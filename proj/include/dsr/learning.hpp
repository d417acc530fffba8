#pragma once

#include <stdexcept>
#include <type_traits>
#include <utility>

#include "dsr/types.hpp"

namespace dsr {

namespace detail {

template <typename Scalar>
void check_loss_shapes(const Matrix<Scalar>& x, const Matrix<Scalar>& y, const Matrix<Scalar>& w) {
  if (x.rows() != y.rows()) throw std::invalid_argument("X and Y channel counts differ");
  if (w.rows() != y.cols() || w.cols() != x.cols()) {
    throw std::invalid_argument("W must be (gallery blocks) x (probe blocks)");
  }
}

inline void check_alpha(int alpha) {
  if (alpha != 1 && alpha != -1) throw std::invalid_argument("pair label alpha must be +1 or -1");
}

}  // namespace detail

/// alpha ||X - YW||_F^2 + beta ||W||_1 with X: d x N, Y: d x M, W: M x N.
template <typename Scalar>
Scalar verification_loss(const Matrix<Scalar>& x, const std::type_identity_t<Matrix<Scalar>>& y,
                         const std::type_identity_t<Matrix<Scalar>>& w, int alpha, std::type_identity_t<Scalar> beta) {
  detail::check_loss_shapes(x, y, w);
  detail::check_alpha(alpha);
  return static_cast<Scalar>(alpha) * (x - y * w).squaredNorm() + beta * w.cwiseAbs().sum();
}

template <typename Scalar>
struct LossGradients {
  Matrix<Scalar> d_probe;    // dL/dX = 2 alpha (X - YW)
  Matrix<Scalar> d_gallery;  // dL/dY = -2 alpha (X - YW) W'
};

/// Gradients of verification_loss with W held constant.
template <typename Scalar>
LossGradients<Scalar> loss_gradients(const Matrix<Scalar>& x, const std::type_identity_t<Matrix<Scalar>>& y,
                                     const std::type_identity_t<Matrix<Scalar>>& w, int alpha) {
  detail::check_loss_shapes(x, y, w);
  detail::check_alpha(alpha);
  const Matrix<Scalar> residual = x - y * w;
  LossGradients<Scalar> g;
  g.d_probe = Scalar(2 * alpha) * residual;
  g.d_gallery = Scalar(-2 * alpha) * residual * w.transpose();
  return g;
}

}  // namespace dsr
