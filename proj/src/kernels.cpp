#include "polygen/kernels.hpp"

#include <algorithm>
#include <string>

#include "polygen/errors.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <cpuid.h>
#endif

namespace polygen::kernels {

namespace detail {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double squared_distance_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

double sum_scalar(const double* a, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i];
    return acc;
}

double max_value_scalar(const double* a, std::size_t n) {
    double m = a[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, a[i]);
    return m;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(double* x, double alpha, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

#if defined(__x86_64__) || defined(_M_X64)
bool cpu_has_avx2_fma() {
    unsigned eax, ebx, ecx, edx;
    if (!__get_cpuid_count(7, 0, &eax, &ebx, &ecx, &edx)) return false;
    const bool avx2 = (ebx & (1u << 5)) != 0;
    if (!__get_cpuid(1, &eax, &ebx, &ecx, &edx)) return false;
    const bool fma = (ecx & (1u << 12)) != 0;
    return avx2 && fma;
}
#endif

}  // namespace detail

namespace {

struct Ops {
    double (*dot)(const double*, const double*, std::size_t);
    double (*squared_distance)(const double*, const double*, std::size_t);
    double (*sum)(const double*, std::size_t);
    double (*max_value)(const double*, std::size_t);
    void (*axpy)(double, const double*, double*, std::size_t);
    void (*scale)(double*, double, std::size_t);
};

constexpr Ops kScalarOps{detail::dot_scalar,       detail::squared_distance_scalar,
                         detail::sum_scalar,       detail::max_value_scalar,
                         detail::axpy_scalar,      detail::scale_scalar};

#if defined(__x86_64__) || defined(_M_X64)
constexpr Ops kAvx2Ops{detail::dot_avx2,       detail::squared_distance_avx2,
                       detail::sum_avx2,       detail::max_value_avx2,
                       detail::axpy_avx2,      detail::scale_avx2};
#endif

#if defined(__aarch64__)
constexpr Ops kNeonOps{detail::dot_neon,       detail::squared_distance_neon,
                       detail::sum_neon,       detail::max_value_neon,
                       detail::axpy_neon,      detail::scale_neon};
#endif

Impl detect_impl() {
#if defined(__x86_64__) || defined(_M_X64)
    if (detail::cpu_has_avx2_fma()) return Impl::avx2;
#endif
#if defined(__aarch64__)
    return Impl::neon;
#endif
    return Impl::scalar;
}

const Ops* ops_for(Impl impl) {
    switch (impl) {
        case Impl::scalar:
            return &kScalarOps;
        case Impl::avx2:
#if defined(__x86_64__) || defined(_M_X64)
            if (detail::cpu_has_avx2_fma()) return &kAvx2Ops;
#endif
            return nullptr;
        case Impl::neon:
#if defined(__aarch64__)
            return &kNeonOps;
#else
            return nullptr;
#endif
    }
    return nullptr;
}

Impl g_impl = detect_impl();
const Ops* g_ops = ops_for(detect_impl());

}  // namespace

Impl active_impl() { return g_impl; }

const char* impl_name(Impl impl) {
    switch (impl) {
        case Impl::scalar: return "scalar";
        case Impl::avx2: return "avx2";
        case Impl::neon: return "neon";
    }
    return "?";
}

void force_impl(Impl impl) {
    const Ops* ops = ops_for(impl);
    if (ops == nullptr) {
        throw ValidationError(std::string("kernel implementation not available on this cpu: ") +
                              impl_name(impl));
    }
    g_impl = impl;
    g_ops = ops;
}

void reset_impl() {
    g_impl = detect_impl();
    g_ops = ops_for(g_impl);
}

double dot(const double* a, const double* b, std::size_t n) { return g_ops->dot(a, b, n); }

double squared_distance(const double* a, const double* b, std::size_t n) {
    return g_ops->squared_distance(a, b, n);
}

double sum(const double* a, std::size_t n) { return g_ops->sum(a, n); }

double max_value(const double* a, std::size_t n) { return g_ops->max_value(a, n); }

void axpy(double alpha, const double* x, double* y, std::size_t n) { g_ops->axpy(alpha, x, y, n); }

void scale(double* x, double alpha, std::size_t n) { g_ops->scale(x, alpha, n); }

}  // namespace polygen::kernels
