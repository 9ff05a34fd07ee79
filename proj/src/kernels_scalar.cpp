#include <phaco/kernels.hpp>

#include <cstring>

namespace phaco::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy_scalar(double* y, double s, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += s * x[i];
}

void matmul_scalar(const double* a, const double* b, double* c,
                   std::size_t n, std::size_t k, std::size_t m) {
    std::memset(c, 0, n * m * sizeof(double));
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

void corr_accum_scalar(const double* a, const double* b2, std::size_t n, double* c) {
    for (std::size_t i = 0; i < n; ++i) {
        const double av = a[i];
        const double* bs = b2 + i;
        for (std::size_t u = 0; u < n; ++u) c[u] += av * bs[u];
    }
}

} // namespace

namespace detail {
const Impl scalar_impl = {dot_scalar, axpy_scalar, matmul_scalar, corr_accum_scalar};
} // namespace detail

} // namespace phaco::kernels
