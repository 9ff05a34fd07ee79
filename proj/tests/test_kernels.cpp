#include <doctest.h>

#include <phaco/kernels.hpp>
#include <phaco/rng.hpp>

#include <cmath>
#include <vector>

using namespace phaco;

namespace {

std::vector<double> random_vec(std::size_t n, rng::Xoshiro256pp& g, double lo = -2.0,
                               double hi = 2.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = g.uniform(lo, hi);
    return v;
}

struct BackendGuard {
    kernels::Backend saved;
    BackendGuard() : saved(kernels::active_backend()) {}
    ~BackendGuard() { kernels::set_backend(saved); }
};

} // namespace

TEST_SUITE("kernels") {

TEST_CASE("dot matches a plain loop") {
    rng::Xoshiro256pp g(11);
    for (std::size_t n : {0u, 1u, 3u, 8u, 17u, 256u, 1000u}) {
        auto a = random_vec(n, g), b = random_vec(n, g);
        double ref = 0.0;
        for (std::size_t i = 0; i < n; ++i) ref += a[i] * b[i];
        const double got = kernels::dot(a.data(), b.data(), n);
        CHECK(got == doctest::Approx(ref).epsilon(1e-12));
    }
}

TEST_CASE("axpy matches a plain loop") {
    rng::Xoshiro256pp g(12);
    for (std::size_t n : {1u, 5u, 64u, 333u}) {
        auto x = random_vec(n, g);
        auto y = random_vec(n, g);
        auto expect = y;
        const double s = g.uniform(-3, 3);
        for (std::size_t i = 0; i < n; ++i) expect[i] += s * x[i];
        kernels::axpy(y.data(), s, x.data(), n);
        for (std::size_t i = 0; i < n; ++i) CHECK(y[i] == doctest::Approx(expect[i]).epsilon(1e-12));
    }
}

TEST_CASE("matmul matches a naive triple loop") {
    rng::Xoshiro256pp g(13);
    struct Dims {
        int n, k, m;
    };
    for (auto [n, k, m] : {Dims{1, 1, 1}, Dims{2, 3, 4}, Dims{5, 8, 3}, Dims{16, 16, 16},
                           Dims{7, 31, 9}}) {
        auto a = random_vec(std::size_t(n) * k, g);
        auto b = random_vec(std::size_t(k) * m, g);
        std::vector<double> ref(std::size_t(n) * m, 0.0), got(std::size_t(n) * m, 0.0);
        for (int i = 0; i < n; ++i)
            for (int p = 0; p < k; ++p)
                for (int j = 0; j < m; ++j) ref[std::size_t(i) * m + j] += a[std::size_t(i) * k + p] * b[std::size_t(p) * m + j];
        kernels::matmul(a.data(), b.data(), got.data(), n, k, m);
        for (std::size_t i = 0; i < ref.size(); ++i)
            CHECK(got[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
}

TEST_CASE("corr_accum matches a naive sliding loop") {
    rng::Xoshiro256pp g(14);
    for (std::size_t n : {1u, 2u, 7u, 64u, 129u}) {
        auto a = random_vec(n, g);
        auto b2 = random_vec(2 * n - 1, g);
        std::vector<double> ref(n, 0.5), got(n, 0.5);
        for (std::size_t u = 0; u < n; ++u)
            for (std::size_t i = 0; i < n; ++i) ref[u] += a[i] * b2[i + u];
        kernels::corr_accum(a.data(), b2.data(), n, got.data());
        for (std::size_t u = 0; u < n; ++u) CHECK(got[u] == doctest::Approx(ref[u]).epsilon(1e-12));
    }
}

TEST_CASE("scalar and avx2 backends agree") {
    BackendGuard guard;
    if (!kernels::set_backend(kernels::Backend::Avx2)) {
        MESSAGE("avx2 unavailable on this machine; equivalence not exercised");
        return;
    }
    rng::Xoshiro256pp g(15);
    const std::size_t n = 513;
    auto a = random_vec(n, g), b = random_vec(n, g), b2 = random_vec(2 * n - 1, g);
    auto ma = random_vec(24 * 33, g), mb = random_vec(33 * 17, g);

    REQUIRE(kernels::set_backend(kernels::Backend::Avx2));
    const double dot_v = kernels::dot(a.data(), b.data(), n);
    std::vector<double> axpy_v = b;
    kernels::axpy(axpy_v.data(), 1.7, a.data(), n);
    std::vector<double> mm_v(24 * 17, 0.0);
    kernels::matmul(ma.data(), mb.data(), mm_v.data(), 24, 33, 17);
    std::vector<double> corr_v(n, 0.0);
    kernels::corr_accum(a.data(), b2.data(), n, corr_v.data());

    REQUIRE(kernels::set_backend(kernels::Backend::Scalar));
    const double dot_s = kernels::dot(a.data(), b.data(), n);
    std::vector<double> axpy_s = b;
    kernels::axpy(axpy_s.data(), 1.7, a.data(), n);
    std::vector<double> mm_s(24 * 17, 0.0);
    kernels::matmul(ma.data(), mb.data(), mm_s.data(), 24, 33, 17);
    std::vector<double> corr_s(n, 0.0);
    kernels::corr_accum(a.data(), b2.data(), n, corr_s.data());

    CHECK(dot_v == doctest::Approx(dot_s).epsilon(1e-13));
    for (std::size_t i = 0; i < n; ++i) CHECK(axpy_v[i] == doctest::Approx(axpy_s[i]).epsilon(1e-13));
    for (std::size_t i = 0; i < mm_s.size(); ++i) CHECK(mm_v[i] == doctest::Approx(mm_s[i]).epsilon(1e-13));
    for (std::size_t i = 0; i < n; ++i) CHECK(corr_v[i] == doctest::Approx(corr_s[i]).epsilon(1e-13));
}

TEST_CASE("backend forcing reports availability") {
    BackendGuard guard;
    CHECK(kernels::set_backend(kernels::Backend::Scalar));
    CHECK(kernels::active_backend() == kernels::Backend::Scalar);
    CHECK(kernels::backend_name(kernels::Backend::Scalar) == "scalar");
    CHECK(kernels::backend_name(kernels::Backend::Avx2) == "avx2");
}

} // TEST_SUITE
