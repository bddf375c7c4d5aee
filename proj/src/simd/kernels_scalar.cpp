#include <algorithm>
#include <limits>

#include "wmseg/simd/kernels.hpp"

namespace wmseg::simd {
namespace {

void sqdist(double px, double py, const double* xs, const double* ys, std::size_t n, double* out) {
    for (std::size_t j = 0; j < n; ++j) {
        const double dx = xs[j] - px;
        const double dy = ys[j] - py;
        out[j] = dx * dx + dy * dy;
    }
}

void sqdist_min(double px, double py, const double* xs, const double* ys, const double* extra, std::size_t n,
                double* best, std::int32_t* arg, std::int32_t idx) {
    for (std::size_t j = 0; j < n; ++j) {
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
    for (std::size_t j = 0; j < n; ++j) {
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
    for (std::size_t j = 0; j < n; ++j) y[j] = y[j] + a * x[j];
}

} // namespace

const KernelTable detail::scalar_table{&sqdist, &sqdist_min, &polygon_sqdist, &axpy};

} // namespace wmseg::simd
