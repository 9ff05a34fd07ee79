#include <phaco/kernels.hpp>

#include <cstring>
#include <immintrin.h>

namespace phaco::kernels {
namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy_avx2(double* y, double s, const double* x, std::size_t n) {
    const __m256d sv = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d yv = _mm256_loadu_pd(y + i);
        yv = _mm256_fmadd_pd(sv, _mm256_loadu_pd(x + i), yv);
        _mm256_storeu_pd(y + i, yv);
    }
    for (; i < n; ++i) y[i] += s * x[i];
}

void matmul_avx2(const double* a, const double* b, double* c,
                 std::size_t n, std::size_t k, std::size_t m) {
    std::memset(c, 0, n * m * sizeof(double));
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double* brow = b + p * m;
            const __m256d av = _mm256_set1_pd(arow[p]);
            std::size_t j = 0;
            for (; j + 4 <= m; j += 4) {
                __m256d cv = _mm256_loadu_pd(crow + j);
                cv = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j), cv);
                _mm256_storeu_pd(crow + j, cv);
            }
            for (; j < m; ++j) crow[j] += arow[p] * brow[j];
        }
    }
}

void corr_accum_avx2(const double* a, const double* b2, std::size_t n, double* c) {
    for (std::size_t i = 0; i < n; ++i) {
        const __m256d av = _mm256_set1_pd(a[i]);
        const double* bs = b2 + i;
        std::size_t u = 0;
        for (; u + 8 <= n; u += 8) {
            __m256d c0 = _mm256_loadu_pd(c + u);
            __m256d c1 = _mm256_loadu_pd(c + u + 4);
            c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bs + u), c0);
            c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bs + u + 4), c1);
            _mm256_storeu_pd(c + u, c0);
            _mm256_storeu_pd(c + u + 4, c1);
        }
        for (; u < n; ++u) c[u] += a[i] * bs[u];
    }
}

} // namespace

namespace detail {
const Impl avx2_impl = {dot_avx2, axpy_avx2, matmul_avx2, corr_accum_avx2};
} // namespace detail

} // namespace phaco::kernels
