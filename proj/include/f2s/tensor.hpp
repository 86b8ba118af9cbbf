#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace f2s {

// Row-major 2-D view.
template <class T>
struct MatrixView {
  T* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::span<T> row(std::size_t r) const { return {data + r * cols, cols}; }
  std::span<T> rows_span(std::size_t begin, std::size_t end) const {
    return {data + begin * cols, (end - begin) * cols};
  }
  T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  bool empty() const { return data == nullptr || rows == 0; }
};

template <class T>
using ConstMatrixView = MatrixView<const T>;

// Named parameter tensor of rank 1 or 2.
template <class T>
struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<T> data;

  Tensor() = default;
  Tensor(std::string n, std::vector<std::size_t> s) : name(std::move(n)), shape(std::move(s)) {
    std::size_t count = 1;
    for (auto d : shape) count *= d;
    data.assign(count, T{0});
  }

  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  MatrixView<T> view() { return {data.data(), rows(), cols()}; }
  ConstMatrixView<T> view() const { return {data.data(), rows(), cols()}; }
  std::span<T> span() { return data; }
  std::span<const T> span() const { return data; }
};

}  // namespace f2s
