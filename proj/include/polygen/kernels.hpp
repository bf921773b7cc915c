#pragma once

#include <cstddef>

// Dense double-precision primitives behind a runtime-dispatched table.
// Scalar versions are the reference; vector versions (AVX2 on x86-64, NEON on
// aarch64) are selected once at startup from CPU feature bits and must agree
// with the reference to rounding error. Everything above this layer (losses,
// k-means, normalization, similarity) goes through these entry points.

namespace polygen::kernels {

enum class Impl { scalar, avx2, neon };

Impl active_impl();
const char* impl_name(Impl impl);

// Test hook. Throws ValidationError when the requested path is not available
// on this machine.
void force_impl(Impl impl);
void reset_impl();

double dot(const double* a, const double* b, std::size_t n);
double squared_distance(const double* a, const double* b, std::size_t n);
double sum(const double* a, std::size_t n);
double max_value(const double* a, std::size_t n);  // n > 0, finite inputs
void axpy(double alpha, const double* x, double* y, std::size_t n);  // y += alpha*x
void scale(double* x, double alpha, std::size_t n);

namespace detail {

double dot_scalar(const double* a, const double* b, std::size_t n);
double squared_distance_scalar(const double* a, const double* b, std::size_t n);
double sum_scalar(const double* a, std::size_t n);
double max_value_scalar(const double* a, std::size_t n);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n);
void scale_scalar(double* x, double alpha, std::size_t n);

#if defined(__x86_64__) || defined(_M_X64)
bool cpu_has_avx2_fma();
double dot_avx2(const double* a, const double* b, std::size_t n);
double squared_distance_avx2(const double* a, const double* b, std::size_t n);
double sum_avx2(const double* a, std::size_t n);
double max_value_avx2(const double* a, std::size_t n);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);
void scale_avx2(double* x, double alpha, std::size_t n);
#endif

#if defined(__aarch64__)
double dot_neon(const double* a, const double* b, std::size_t n);
double squared_distance_neon(const double* a, const double* b, std::size_t n);
double sum_neon(const double* a, std::size_t n);
double max_value_neon(const double* a, std::size_t n);
void axpy_neon(double alpha, const double* x, double* y, std::size_t n);
void scale_neon(double* x, double alpha, std::size_t n);
#endif

}  // namespace detail

}  // namespace polygen::kernels
