// Compiled with -mavx2 only; callers reach these through the dispatch table
// after CPUID confirmed AVX2 support.
#include <immintrin.h>

#include <algorithm>
#include <limits>

#include "wmseg/simd/kernels.hpp"

namespace wmseg::simd {
namespace {

void sqdist(double px, double py, const double* xs, const double* ys, std::size_t n, double* out) {
    const __m256d vpx = _mm256_set1_pd(px);
    const __m256d vpy = _mm256_set1_pd(py);
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(xs + j), vpx);
        const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(ys + j), vpy);
        _mm256_storeu_pd(out + j, _mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy)));
    }
    for (; j < n; ++j) {
        const double dx = xs[j] - px;
        const double dy = ys[j] - py;
        out[j] = dx * dx + dy * dy;
    }
}

void sqdist_min(double px, double py, const double* xs, const double* ys, const double* extra, std::size_t n,
                double* best, std::int32_t* arg, std::int32_t idx) {
    const __m256d vpx = _mm256_set1_pd(px);
    const __m256d vpy = _mm256_set1_pd(py);
    const __m128i vidx = _mm_set1_epi32(idx);
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(xs + j), vpx);
        const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(ys + j), vpy);
        __m256d c = _mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy));
        if (extra) c = _mm256_add_pd(c, _mm256_loadu_pd(extra + j));
        const __m256d b = _mm256_loadu_pd(best + j);
        const __m256d lt = _mm256_cmp_pd(c, b, _CMP_LT_OQ);
        if (_mm256_movemask_pd(lt) == 0) continue;
        _mm256_storeu_pd(best + j, _mm256_blendv_pd(b, c, lt));
        // Narrow the 64-bit lane mask to 32-bit lanes for the index blend.
        const __m128i mask32 = _mm256_castsi256_si128(
            _mm256_permutevar8x32_epi32(_mm256_castpd_si256(lt), _mm256_setr_epi32(0, 2, 4, 6, 1, 3, 5, 7)));
        const __m128i old = _mm_loadu_si128(reinterpret_cast<const __m128i*>(arg + j));
        _mm_storeu_si128(reinterpret_cast<__m128i*>(arg + j), _mm_blendv_epi8(old, vidx, mask32));
    }
    for (; j < n; ++j) {
        const double dx = xs[j] - px;
        const double dy = ys[j] - py;
        double c = dx * dx + dy * dy;
        if (extra) c = c + extra[j];
        if (c < best[j]) {
            best[j] = c;
            arg[j] = idx;
        }
    }
}

void polygon_sqdist(const EdgeList& poly, double ox, double oy, const double* xs, const double* ys, std::size_t n,
                    double* out) {
    const std::size_t k = poly.size();
    const __m256d vox = _mm256_set1_pd(ox);
    const __m256d voy = _mm256_set1_pd(oy);
    const __m256d zero = _mm256_setzero_pd();
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d inf = _mm256_set1_pd(std::numeric_limits<double>::infinity());
    const __m256d solid = poly.solid ? _mm256_castsi256_pd(_mm256_set1_epi64x(-1)) : zero;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        const __m256d px = _mm256_sub_pd(_mm256_loadu_pd(xs + j), vox);
        const __m256d py = _mm256_sub_pd(_mm256_loadu_pd(ys + j), voy);
        __m256d best = inf;
        __m256d inside = _mm256_castsi256_pd(_mm256_set1_epi64x(-1));
        for (std::size_t e = 0; e < k; ++e) {
            const __m256d ax = _mm256_set1_pd(poly.ax[e]);
            const __m256d ay = _mm256_set1_pd(poly.ay[e]);
            const __m256d ex = _mm256_set1_pd(poly.ex[e]);
            const __m256d ey = _mm256_set1_pd(poly.ey[e]);
            const __m256d il = _mm256_set1_pd(poly.inv_len2[e]);
            const __m256d dx = _mm256_sub_pd(px, ax);
            const __m256d dy = _mm256_sub_pd(py, ay);
            __m256d t = _mm256_mul_pd(_mm256_add_pd(_mm256_mul_pd(dx, ex), _mm256_mul_pd(dy, ey)), il);
            t = _mm256_min_pd(_mm256_max_pd(t, zero), one);
            const __m256d rx = _mm256_sub_pd(dx, _mm256_mul_pd(t, ex));
            const __m256d ry = _mm256_sub_pd(dy, _mm256_mul_pd(t, ey));
            best = _mm256_min_pd(best, _mm256_add_pd(_mm256_mul_pd(rx, rx), _mm256_mul_pd(ry, ry)));
            const __m256d cr = _mm256_sub_pd(_mm256_mul_pd(ex, dy), _mm256_mul_pd(ey, dx));
            inside = _mm256_and_pd(inside, _mm256_cmp_pd(cr, zero, _CMP_GE_OQ));
        }
        _mm256_storeu_pd(out + j, _mm256_blendv_pd(best, zero, _mm256_and_pd(inside, solid)));
    }
    for (; j < n; ++j) {
        const double px = xs[j] - ox;
        const double py = ys[j] - oy;
        double best = std::numeric_limits<double>::infinity();
        bool inside = true;
        for (std::size_t e = 0; e < k; ++e) {
            const double dx = px - poly.ax[e];
            const double dy = py - poly.ay[e];
            double t = (dx * poly.ex[e] + dy * poly.ey[e]) * poly.inv_len2[e];
            t = std::min(std::max(t, 0.0), 1.0);
            const double rx = dx - t * poly.ex[e];
            const double ry = dy - t * poly.ey[e];
            best = std::min(best, rx * rx + ry * ry);
            const double cr = poly.ex[e] * dy - poly.ey[e] * dx;
            inside = inside && (cr >= 0.0);
        }
        out[j] = (poly.solid && inside) ? 0.0 : best;
    }
}

void axpy(double a, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        _mm256_storeu_pd(y + j, _mm256_add_pd(_mm256_loadu_pd(y + j), _mm256_mul_pd(va, _mm256_loadu_pd(x + j))));
    }
    for (; j < n; ++j) y[j] = y[j] + a * x[j];
}

} // namespace

const KernelTable detail::avx2_table{&sqdist, &sqdist_min, &polygon_sqdist, &axpy};

} // namespace wmseg::simd
