#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "tmlp/errors.hpp"

namespace tmlp::numerics {

using index = std::size_t;

/// Dense row-major matrix. T is float for training paths, double for
/// oracle/validation paths; both share one implementation.
template <class T>
struct Matrix {
  index rows = 0;
  index cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(index r, index c) : rows(r), cols(c), data(r * c, T(0)) {}
  Matrix(index r, index c, std::vector<T> d) : rows(r), cols(c), data(std::move(d)) {
    if (data.size() != rows * cols)
      throw ShapeError("matrix data length " + std::to_string(data.size()) +
                       " != " + std::to_string(rows) + "x" + std::to_string(cols));
  }

  T& at(index r, index c) { return data[r * cols + c]; }
  const T& at(index r, index c) const { return data[r * cols + c]; }
  index size() const { return data.size(); }
};

template <class T>
using Vector = std::vector<T>;

inline std::string shape_str(index r, index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <class T>
void ensure_finite(const T* p, index n, const char* what) {
  for (index i = 0; i < n; ++i)
    if (!std::isfinite(double(p[i])))
      throw NumericError(std::string(what) + ": non-finite value at index " +
                         std::to_string(i));
}

template <class T>
void ensure_finite(const std::vector<T>& v, const char* what) {
  ensure_finite(v.data(), v.size(), what);
}

/// W x + b for a single sample.
template <class T>
Vector<T> matmul_add(const Matrix<T>& W, const Vector<T>& x, const Vector<T>& b) {
  if (W.cols != x.size() || W.rows != b.size())
    throw ShapeError("matmul_add: W " + shape_str(W.rows, W.cols) + " vs x " +
                     shape_str(x.size(), 1) + ", b " + shape_str(b.size(), 1));
  Vector<T> out(b);
  for (index r = 0; r < W.rows; ++r) {
    T acc = 0;
    const T* row = W.data.data() + r * W.cols;
    for (index c = 0; c < W.cols; ++c) acc += row[c] * x[c];
    out[r] += acc;
  }
  ensure_finite(out, "matmul_add");
  return out;
}

/// Elementwise sin(omega0 * z). Callers pass omega0 at the first layer and
/// 1 at deeper layers, where the frequency factor lives in the weights.
template <class T>
Vector<T> sine_activation(const Vector<T>& z, T omega0) {
  if (!(omega0 > T(0))) throw NumericError("sine_activation: omega0 must be > 0");
  ensure_finite(z, "sine_activation input");
  Vector<T> out(z.size());
  for (index i = 0; i < z.size(); ++i) out[i] = std::sin(omega0 * z[i]);
  return out;
}

template <class T>
Vector<T> hadamard(const Vector<T>& a, const Vector<T>& b) {
  if (a.size() != b.size())
    throw ShapeError("hadamard: length " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  Vector<T> out(a.size());
  for (index i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  ensure_finite(out, "hadamard");
  return out;
}

template <class T>
struct AdamState {
  Vector<T> first_moment;
  Vector<T> second_moment;
  long step_count = 0;
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T epsilon = T(1e-8);

  explicit AdamState(index n_params = 0)
      : first_moment(n_params, T(0)), second_moment(n_params, T(0)) {}
};

/// One Adam update in place. Bias-corrected, epsilon added after the sqrt.
template <class T>
void adam_step(Vector<T>& params, const Vector<T>& grads, AdamState<T>& state, T lr) {
  const index n = params.size();
  if (grads.size() != n || state.first_moment.size() != n ||
      state.second_moment.size() != n)
    throw ShapeError("adam_step: param/grad/state length mismatch (" +
                     std::to_string(n) + ", " + std::to_string(grads.size()) + ", " +
                     std::to_string(state.first_moment.size()) + ")");
  for (index i = 0; i < n; ++i)
    if (!std::isfinite(double(grads[i])))
      throw NumericError("adam_step: non-finite gradient at index " + std::to_string(i));

  state.step_count += 1;
  const T b1 = state.beta1, b2 = state.beta2;
  const T c1 = T(1) - T(std::pow(double(b1), double(state.step_count)));
  const T c2 = T(1) - T(std::pow(double(b2), double(state.step_count)));
  T* m = state.first_moment.data();
  T* v = state.second_moment.data();
  for (index i = 0; i < n; ++i) {
    m[i] = b1 * m[i] + (T(1) - b1) * grads[i];
    v[i] = b2 * v[i] + (T(1) - b2) * grads[i] * grads[i];
    const T mhat = m[i] / c1;
    const T vhat = v[i] / c2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
  }
  ensure_finite(params, "adam_step params");
}

/// Central finite differences, the ground-truth oracle for hand-derived
/// gradients. loss_fn must be pure.
inline Vector<double> finite_difference_gradient(
    const std::function<double(const Vector<double>&)>& loss_fn,
    const Vector<double>& params, double h) {
  if (!(h > 0)) throw NumericError("finite_difference_gradient: h must be > 0");
  Vector<double> p(params);
  Vector<double> grad(params.size());
  for (index i = 0; i < params.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + h;
    const double fp = loss_fn(p);
    p[i] = saved - h;
    const double fm = loss_fn(p);
    p[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("finite_difference_gradient: non-finite loss at index " +
                         std::to_string(i));
    grad[i] = (fp - fm) / (2 * h);
  }
  return grad;
}

/// C = A * op(B) + C over row-major buffers, sample-major batched layout.
/// Backed by a BLAS sgemm/dgemm; the per-sample ops above stay the reference.
void gemm(bool trans_a, bool trans_b, index m, index n, index k, float alpha,
          const float* a, index lda, const float* b, index ldb, float beta, float* c,
          index ldc);
void gemm(bool trans_a, bool trans_b, index m, index n, index k, double alpha,
          const double* a, index lda, const double* b, index ldb, double beta,
          double* c, index ldc);

/// Elementwise s[i] = sin(omega * z[i]), c[i] = cos(omega * z[i]).
/// The float version is compiled in a vectorized translation unit.
void sincos_batch(const float* z, float* s, float* c, index n, float omega);
void sincos_batch(const double* z, double* s, double* c, index n, double omega);

}  // namespace tmlp::numerics
