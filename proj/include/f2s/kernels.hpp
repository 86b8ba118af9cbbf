#pragma once

// Inner-loop arithmetic used by the model and the output heads.
//
// Every kernel has a portable scalar reference in f2s::kernels::scalar and,
// on x86-64 builds, an AVX2/FMA variant in f2s::kernels::avx2. The free
// functions in f2s::kernels forward to whichever table was selected at
// startup. Set F2S_SIMD=scalar to force the reference path.

#include <cstddef>
#include <span>
#include <string_view>

namespace f2s::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

// True when the variant was compiled in and the running CPU supports it.
bool isa_supported(Isa isa);

Isa active_isa();

// Switches the dispatch table. Throws std::invalid_argument when the ISA is
// unavailable. Not thread-safe with respect to in-flight kernel calls.
void set_active_isa(Isa isa);

template <class T>
struct Table {
  T (*dot)(const T* a, const T* b, std::size_t n);
  void (*axpy)(T alpha, const T* x, T* y, std::size_t n);
  T (*sum_squares)(const T* x, std::size_t n);
  // out[r] = dot(mat[r, :], x) for a row-major rows x cols matrix.
  void (*gemv)(const T* mat, std::size_t rows, std::size_t cols, const T* x, T* out);
};

namespace scalar {
const Table<float>& table_f32();
const Table<double>& table_f64();
}  // namespace scalar

#if defined(F2S_HAVE_AVX2)
namespace avx2 {
const Table<float>& table_f32();
const Table<double>& table_f64();
}  // namespace avx2
#endif

template <class T>
const Table<T>& active_table();

template <class T>
inline T dot(std::span<const T> a, std::span<const T> b) {
  return active_table<T>().dot(a.data(), b.data(), a.size() < b.size() ? a.size() : b.size());
}

// y += alpha * x
template <class T>
inline void axpy(T alpha, std::span<const T> x, std::span<T> y) {
  active_table<T>().axpy(alpha, x.data(), y.data(), x.size() < y.size() ? x.size() : y.size());
}

template <class T>
inline T sum_squares(std::span<const T> x) {
  return active_table<T>().sum_squares(x.data(), x.size());
}

template <class T>
inline void gemv(std::span<const T> mat, std::size_t rows, std::size_t cols, std::span<const T> x,
                 std::span<T> out) {
  active_table<T>().gemv(mat.data(), rows, cols, x.data(), out.data());
}

}  // namespace f2s::kernels
