#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

namespace rvol {

// Row-major dense matrix. Small sizes only (covariance blocks, network weights).
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }

    [[nodiscard]] const double* row(std::size_t i) const { return a.data() + i * cols; }
    double* row(std::size_t i) { return a.data() + i * cols; }
};

// In-place lower Cholesky of a symmetric matrix (upper triangle ignored).
// Returns false if a pivot is not strictly positive.
inline bool cholesky_lower_inplace(Matrix& m) {
    if (m.rows != m.cols) throw std::invalid_argument("cholesky: matrix not square");
    const std::size_t n = m.rows;
    for (std::size_t j = 0; j < n; ++j) {
        double d = m(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= m(j, k) * m(j, k);
        if (!(d > 0.0)) return false;
        const double l = std::sqrt(d);
        m(j, j) = l;
        const double inv = 1.0 / l;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = m(i, j);
            const double* ri = m.row(i);
            const double* rj = m.row(j);
            for (std::size_t k = 0; k < j; ++k) s -= ri[k] * rj[k];
            m(i, j) = s * inv;
        }
        for (std::size_t k = j + 1; k < n; ++k) m(j, k) = 0.0;
    }
    return true;
}

// Gauss-Legendre nodes/weights on [-1, 1] via Newton iteration on P_n.
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
    if (n < 1) throw std::invalid_argument("gauss_legendre: n must be positive");
    std::vector<double> x(n), w(n);
    const int half = (n + 1) / 2;
    for (int i = 0; i < half; ++i) {
        // Tricomi-style initial guess, then Newton.
        double z = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int k = 0; k < n; ++k) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * k + 1.0) * z * p1 - k * p2) / (k + 1.0);
            }
            pp = n * (z * p0 - p1) / (z * z - 1.0);
            const double dz = p0 / pp;
            z -= dz;
            if (std::abs(dz) < 1e-15) break;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * pp * pp);
    }
    return {std::move(x), std::move(w)};
}

// exp with ~1 ulp accuracy, branch-light so batched sigmoid loops vectorize.
// Cephes-style rational approximation of e^r on |r| <= ln2/2, scaled by 2^n.
inline double fast_exp(double x) {
    constexpr double log2e = 1.4426950408889634074;
    constexpr double c1 = 6.93145751953125e-1;
    constexpr double c2 = 1.42860682030941723212e-6;
    constexpr double p0 = 1.26177193074810590878e-4;
    constexpr double p1 = 3.02994407707441961300e-2;
    constexpr double p2 = 9.99999999999999999910e-1;
    constexpr double q0 = 3.00198505138664455042e-6;
    constexpr double q1 = 2.52448340349684104192e-3;
    constexpr double q2 = 2.27265548208155028766e-1;
    constexpr double q3 = 2.00000000000000000005e0;

    x = std::min(709.0, std::max(-709.0, x));
    // round-to-nearest-even via the 2^52+2^51 shift: |log2e*x| < 1024 so the
    // add pushes the value into the regime where doubles step by 1; pure
    // add/sub keeps the loop body branch-free (nearbyint is a libm call and
    // defeats vectorization)
    constexpr double shift = 6755399441055744.0;  // 2^52 + 2^51
    const double nf = (log2e * x + shift) - shift;
    x -= nf * c1;
    x -= nf * c2;
    const double xx = x * x;
    const double px = x * ((p0 * xx + p1) * xx + p2);
    const double qx = ((q0 * xx + q1) * xx + q2) * xx + q3;
    const double e = 1.0 + 2.0 * px / (qx - px);
    const auto n = static_cast<int64_t>(nf);
    const double scale = std::bit_cast<double>(static_cast<uint64_t>(n + 1023) << 52);
    return e * scale;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + fast_exp(-x)); }

namespace detail {

// Single-division sigmoid built from the same rational kernel as fast_exp:
// with e^y = s*(q+p)/(q-p), sigmoid(x) = (q-p) / ((q-p) + s*(q+p)) for y=-x.
// Every operation (clamp, fma placement, the bit-level 2^n construction) is
// written to match the vector lanes below exactly, so batch evaluation gives
// the same bits whether an element lands in the 8-wide body or the tail.
inline double sigmoid_core(double x) {
    constexpr double log2e = 1.4426950408889634074;
    constexpr double shift = 6755399441055744.0;  // 2^52 + 2^51
    constexpr double c1 = 6.93145751953125e-1;
    constexpr double c2 = 1.42860682030941723212e-6;
    constexpr double p0 = 1.26177193074810590878e-4;
    constexpr double p1 = 3.02994407707441961300e-2;
    constexpr double p2 = 9.99999999999999999910e-1;
    constexpr double q0 = 3.00198505138664455042e-6;
    constexpr double q1 = 2.52448340349684104192e-3;
    constexpr double q2 = 2.27265548208155028766e-1;
    constexpr double q3 = 2.00000000000000000005e0;

    const double y = std::min(709.0, std::max(-709.0, -x));
    const double t = std::fma(log2e, y, shift);
    const double nf = t - shift;
    double r = std::fma(nf, -c1, y);
    r = std::fma(nf, -c2, r);
    const double xx = r * r;
    double p = std::fma(p0, xx, p1);
    p = std::fma(p, xx, p2);
    p *= r;
    double q = std::fma(q0, xx, q1);
    q = std::fma(q, xx, q2);
    q = std::fma(q, xx, q3);
    // low mantissa bits of t hold round(log2e*y) + 2^51; adding the bias and
    // shifting by 52 leaves exactly the exponent field of 2^n
    const double s =
        std::bit_cast<double>((std::bit_cast<std::uint64_t>(t) + 1023u) << 52);
    const double a = q - p;
    return a / std::fma(s, q + p, a);
}

}  // namespace detail

#if defined(__AVX512F__)
inline void sigmoid_inplace(double* h, std::size_t n) {
    constexpr double log2e = 1.4426950408889634074;
    constexpr double shift = 6755399441055744.0;
    const __m512d vlog2e = _mm512_set1_pd(log2e);
    const __m512d vshift = _mm512_set1_pd(shift);
    const __m512d vlo = _mm512_set1_pd(-709.0);
    const __m512d vhi = _mm512_set1_pd(709.0);
    const __m512d vc1n = _mm512_set1_pd(-6.93145751953125e-1);
    const __m512d vc2n = _mm512_set1_pd(-1.42860682030941723212e-6);
    const __m512d vp0 = _mm512_set1_pd(1.26177193074810590878e-4);
    const __m512d vp1 = _mm512_set1_pd(3.02994407707441961300e-2);
    const __m512d vp2 = _mm512_set1_pd(9.99999999999999999910e-1);
    const __m512d vq0 = _mm512_set1_pd(3.00198505138664455042e-6);
    const __m512d vq1 = _mm512_set1_pd(2.52448340349684104192e-3);
    const __m512d vq2 = _mm512_set1_pd(2.27265548208155028766e-1);
    const __m512d vq3 = _mm512_set1_pd(2.00000000000000000005e0);
    const __m512i vbias = _mm512_set1_epi64(1023);

    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m512d x = _mm512_loadu_pd(h + i);
        const __m512d y =
            _mm512_min_pd(vhi, _mm512_max_pd(vlo, _mm512_sub_pd(_mm512_setzero_pd(), x)));
        const __m512d t = _mm512_fmadd_pd(vlog2e, y, vshift);
        const __m512d nf = _mm512_sub_pd(t, vshift);
        __m512d r = _mm512_fmadd_pd(nf, vc1n, y);
        r = _mm512_fmadd_pd(nf, vc2n, r);
        const __m512d xx = _mm512_mul_pd(r, r);
        __m512d p = _mm512_fmadd_pd(vp0, xx, vp1);
        p = _mm512_fmadd_pd(p, xx, vp2);
        p = _mm512_mul_pd(p, r);
        __m512d q = _mm512_fmadd_pd(vq0, xx, vq1);
        q = _mm512_fmadd_pd(q, xx, vq2);
        q = _mm512_fmadd_pd(q, xx, vq3);
        const __m512i sbits =
            _mm512_slli_epi64(_mm512_add_epi64(_mm512_castpd_si512(t), vbias), 52);
        const __m512d s = _mm512_castsi512_pd(sbits);
        const __m512d a = _mm512_sub_pd(q, p);
        const __m512d den = _mm512_fmadd_pd(s, _mm512_add_pd(q, p), a);
        _mm512_storeu_pd(h + i, _mm512_div_pd(a, den));
    }
    for (; i < n; ++i) h[i] = detail::sigmoid_core(h[i]);
}
#else
inline void sigmoid_inplace(double* h, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) h[i] = detail::sigmoid_core(h[i]);
}
#endif

inline double sqr(double x) { return x * x; }

// Sample mean and (n-1)-normalized standard deviation.
inline std::pair<double, double> mean_stddev(const std::vector<double>& v) {
    if (v.empty()) throw std::invalid_argument("mean_stddev: empty sample");
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    if (v.size() == 1) return {m, 0.0};
    double s = 0.0;
    for (double x : v) s += sqr(x - m);
    return {m, std::sqrt(s / static_cast<double>(v.size() - 1))};
}

}  // namespace rvol
