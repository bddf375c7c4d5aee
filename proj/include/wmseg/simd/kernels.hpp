#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

// Data-parallel inner loops of cost assembly. Every kernel has a scalar
// reference implementation and an AVX2 variant; the variant is chosen once at
// runtime from CPUID. Both perform the same operations in the same order
// without FMA contraction, so their outputs are bit-identical.
namespace wmseg::simd {

enum class Level { scalar, avx2 };

std::string_view to_string(Level level);

// Best level the CPU supports (and the build contains).
Level detected_level();
// Level used by the dispatching entry points. Starts at detected_level(),
// or scalar when the environment variable WMSEG_SIMD=scalar is set.
Level active_level();
// Throws wmseg::Error("simd.unsupported") when `level` is not available.
void set_level(Level level);

// Convex polygon stored as edges (start a, direction e, 1/|e|^2). A point or a
// segment is a degenerate polygon with `solid == false`; for those only the
// edge distances count.
struct EdgeList {
    std::vector<double> ax, ay, ex, ey, inv_len2;
    bool solid = false;
    std::size_t size() const { return ax.size(); }
};

struct KernelTable {
    // out[j] = (xs[j] - px)^2 + (ys[j] - py)^2
    void (*sqdist)(double px, double py, const double* xs, const double* ys, std::size_t n, double* out);
    // cand = sqdist + (extra ? extra[j] : 0); where cand < best[j]: best[j] = cand, arg[j] = idx.
    void (*sqdist_min)(double px, double py, const double* xs, const double* ys, const double* extra,
                       std::size_t n, double* best, std::int32_t* arg, std::int32_t idx);
    // out[j] = squared distance from (xs[j] - ox, ys[j] - oy) to the polygon (0 inside).
    void (*polygon_sqdist)(const EdgeList& poly, double ox, double oy, const double* xs, const double* ys,
                           std::size_t n, double* out);
    // y[j] += a * x[j]
    void (*axpy)(double a, const double* x, double* y, std::size_t n);
};

const KernelTable& table(Level level);
const KernelTable& kernels();

namespace detail {
extern const KernelTable scalar_table;
#if defined(WMSEG_HAVE_AVX2)
extern const KernelTable avx2_table;
#endif
} // namespace detail

} // namespace wmseg::simd
