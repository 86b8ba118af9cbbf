#include "f2s/kernels.hpp"

namespace f2s::kernels::scalar {
namespace {

template <class T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <class T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
T sum_squares(const T* x, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
  return acc;
}

template <class T>
void gemv(const T* mat, std::size_t rows, std::size_t cols, const T* x, T* out) {
  for (std::size_t r = 0; r < rows; ++r) out[r] = dot(mat + r * cols, x, cols);
}

}  // namespace

const Table<float>& table_f32() {
  static const Table<float> t{&dot<float>, &axpy<float>, &sum_squares<float>, &gemv<float>};
  return t;
}

const Table<double>& table_f64() {
  static const Table<double> t{&dot<double>, &axpy<double>, &sum_squares<double>, &gemv<double>};
  return t;
}

}  // namespace f2s::kernels::scalar
