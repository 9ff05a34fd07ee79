#include <phaco/kernels.hpp>

#include <cstdlib>

namespace phaco::kernels {
namespace {

bool avx2_available() {
#if defined(PHACO_BUILD_AVX2) && defined(__GNUC__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

struct State {
    Backend backend;
    const detail::Impl* impl;
};

State initial_state() {
    const char* force = std::getenv("PHACO_FORCE_SCALAR");
    if (force == nullptr || force[0] == '\0' || force[0] == '0') {
#if defined(PHACO_BUILD_AVX2)
        if (avx2_available()) return {Backend::Avx2, &detail::avx2_impl};
#endif
    }
    return {Backend::Scalar, &detail::scalar_impl};
}

State& state() {
    static State s = initial_state();
    return s;
}

} // namespace

Backend active_backend() { return state().backend; }

bool set_backend(Backend b) {
    if (b == Backend::Scalar) {
        state() = {Backend::Scalar, &detail::scalar_impl};
        return true;
    }
#if defined(PHACO_BUILD_AVX2)
    if (avx2_available()) {
        state() = {Backend::Avx2, &detail::avx2_impl};
        return true;
    }
#endif
    return false;
}

std::string backend_name(Backend b) {
    return b == Backend::Avx2 ? "avx2" : "scalar";
}

double dot(const double* a, const double* b, std::size_t n) {
    return state().impl->dot(a, b, n);
}

void axpy(double* y, double s, const double* x, std::size_t n) {
    state().impl->axpy(y, s, x, n);
}

void matmul(const double* a, const double* b, double* c,
            std::size_t n, std::size_t k, std::size_t m) {
    state().impl->matmul(a, b, c, n, k, m);
}

void corr_accum(const double* a, const double* b2, std::size_t n, double* c) {
    state().impl->corr_accum(a, b2, n, c);
}

} // namespace phaco::kernels
