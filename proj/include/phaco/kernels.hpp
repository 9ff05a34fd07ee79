#pragma once

#include <cstddef>
#include <string>

namespace phaco::kernels {

// Runtime-dispatched dense kernels. Scalar reference implementations always
// exist; an AVX2/FMA variant is selected at startup when the CPU supports it.
// PHACO_FORCE_SCALAR=1 in the environment pins the scalar backend.

enum class Backend { Scalar, Avx2 };

Backend active_backend();
// Returns false if the requested backend is unavailable on this machine.
bool set_backend(Backend b);
std::string backend_name(Backend b);

// sum_i a[i] * b[i]
double dot(const double* a, const double* b, std::size_t n);

// y[i] += s * x[i]
void axpy(double* y, double s, const double* x, std::size_t n);

// Row-major C(n x m) = A(n x k) * B(k x m). C must not alias A or B.
void matmul(const double* a, const double* b, double* c,
            std::size_t n, std::size_t k, std::size_t m);

// Sliding correlation accumulate: c[u] += sum_i a[i] * b2[i + u] for u in
// [0, n). b2 must hold 2n - 1 readable values (typically a doubled ring).
void corr_accum(const double* a, const double* b2, std::size_t n, double* c);

namespace detail {
struct Impl {
    double (*dot)(const double*, const double*, std::size_t);
    void (*axpy)(double*, double, const double*, std::size_t);
    void (*matmul)(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
    void (*corr_accum)(const double*, const double*, std::size_t, double*);
};
extern const Impl scalar_impl;
#if defined(PHACO_BUILD_AVX2)
extern const Impl avx2_impl;
#endif
} // namespace detail

} // namespace phaco::kernels
