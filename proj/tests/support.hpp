#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "wmseg/energy.hpp"
#include "wmseg/graphcut.hpp"
#include "wmseg/measure.hpp"
#include "wmseg/modes.hpp"

namespace testing {

using wmseg::Edge;
using wmseg::ImageDomain;
using wmseg::ModeBasis;
using wmseg::Point2;
using wmseg::TemplateShape;

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

// Pixel lattice of w x h points with unit capacity, scalar features and 4-neighbour adjacency.
inline ImageDomain lattice_image(std::size_t w, std::size_t h, std::span<const double> features) {
    ImageDomain d;
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            d.points.push_back({static_cast<double>(c), static_cast<double>(r)});
            d.capacities.push_back(1.0);
            d.features.push_back({features[r * w + c]});
        }
    }
    d.adjacency = wmseg::lattice_adjacency(d.points);
    d.raster = wmseg::RasterShape{w, h};
    return d;
}

// Blob-like template of n points near the origin with masses in [0.5, 1].
inline TemplateShape random_template(std::mt19937_64& rng, std::size_t n, double spread) {
    TemplateShape t;
    for (std::size_t i = 0; i < n; ++i) {
        t.points.push_back({uniform(rng, -spread, spread), uniform(rng, -spread, spread)});
        t.masses.push_back(uniform(rng, 0.5, 1.0));
        t.features.push_back({uniform(rng, 0.6, 1.0)});
    }
    return t;
}

// Translation, rotation and (optionally) one random smooth statistical mode.
inline ModeBasis random_basis(std::mt19937_64& rng, const TemplateShape& t, std::size_t n_modes) {
    ModeBasis b = wmseg::geometric_basis(t, false);
    while (b.size() > n_modes) {
        b.modes.pop_back();
        b.sigma.pop_back();
    }
    while (b.size() < n_modes) {
        wmseg::Mode m;
        const double ax = uniform(rng, -0.3, 0.3), ay = uniform(rng, -0.3, 0.3);
        for (const Point2& p : t.points) m.displacements.push_back({ax * p.y + 0.2, ay * p.x - 0.1});
        m.role = wmseg::ModeRole::statistical;
        b.modes.push_back(m);
        b.sigma.push_back(uniform(rng, 0.5, 2.0));
    }
    b.gamma = 0.1;
    return b;
}

// Minimum of sum c_ij p_ij + sum o_i p_iO over integral plans in units of `unit`,
// by dynamic programming over the remaining capacity vector. With masses that are
// multiples of `unit` this is the exact optimum of the partial transport problem.
inline double transport_oracle(std::span<const double> cost, std::span<const double> overflow,
                               std::span<const double> supplies, std::span<const double> capacities, double unit) {
    const std::size_t nx = supplies.size(), ny = capacities.size();
    auto units = [&](double m) { return static_cast<int>(std::lround(m / unit)); };
    std::vector<int> cap0;
    for (double c : capacities) cap0.push_back(units(c));
    std::map<std::vector<int>, double> layer{{cap0, 0.0}};
    for (std::size_t i = 0; i < nx; ++i) {
        const int s = units(supplies[i]);
        std::map<std::vector<int>, double> next;
        for (const auto& [caps, base] : layer) {
            // Enumerate every split of s units over the columns; leftovers go to overflow.
            std::vector<int> take(ny, 0);
            std::vector<int> rest = caps;
            auto visit = [&](auto&& self, std::size_t j, int left, double acc) -> void {
                if (j == ny) {
                    if (left > 0 && !std::isfinite(overflow[i])) return;
                    const double total = acc + (left > 0 ? left * unit * overflow[i] : 0.0);
                    auto [it, inserted] = next.emplace(rest, total);
                    if (!inserted) it->second = std::min(it->second, total);
                    return;
                }
                const double c = cost[i * ny + j];
                const int most = std::isfinite(c) ? std::min(left, rest[j]) : 0;
                for (int q = 0; q <= most; ++q) {
                    rest[j] -= q;
                    self(self, j + 1, left - q, acc + q * unit * (q > 0 ? c : 0.0));
                    rest[j] += q;
                }
            };
            visit(visit, 0, s, base);
        }
        layer.swap(next);
    }
    double best = std::numeric_limits<double>::infinity();
    for (const auto& [caps, v] : layer) best = std::min(best, v);
    return best;
}

// Exhaustive minimum of sum u_y l_y + sum a |l_y - l_y'| over all binary labelings.
inline double labeling_oracle(std::span<const double> unaries, std::span<const Edge> edges) {
    const std::size_t n = unaries.size();
    double best = std::numeric_limits<double>::infinity();
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
        double e = 0.0;
        for (std::size_t y = 0; y < n; ++y) {
            if (mask >> y & 1U) e += unaries[y];
        }
        for (const Edge& ed : edges) {
            if ((mask >> ed.a & 1U) != (mask >> ed.b & 1U)) e += ed.weight;
        }
        best = std::min(best, e);
    }
    return best;
}

// Synthetic segmentation instance: blob template, noisy lattice image with a
// bright region, translation/rotation (+ statistical) modes.
struct Instance {
    TemplateShape tmpl;
    ImageDomain image;
    ModeBasis basis;
    std::vector<double> g;
};

inline Instance random_instance(std::mt19937_64& rng, std::size_t nx, std::size_t side, std::size_t n_modes) {
    Instance s;
    s.tmpl = random_template(rng, nx, 2.5);
    std::vector<double> f(side * side);
    const double cx = uniform(rng, 3.0, side - 4.0), cy = uniform(rng, 3.0, side - 4.0);
    for (std::size_t r = 0; r < side; ++r) {
        for (std::size_t c = 0; c < side; ++c) {
            const double d = std::hypot(c - cx, r - cy);
            f[r * side + c] = std::clamp((d < 3.0 ? 1.0 : 0.0) + uniform(rng, -0.2, 0.2), 0.0, 1.0);
        }
    }
    s.image = lattice_image(side, side, f);
    s.basis = random_basis(rng, s.tmpl, n_modes);
    for (double v : f) s.g.push_back(-v * v);
    return s;
}

inline wmseg::Problem make_problem(const Instance& s, double sigma_tv = 0.0) {
    wmseg::EnergyConfig cfg;
    cfg.sigma_tv = sigma_tv;
    cfg.g_background = s.g;
    return wmseg::Problem(s.tmpl, s.image, s.basis, wmseg::FeatureCost::squared_euclidean(), cfg);
}

inline std::vector<double> random_lambda(std::mt19937_64& rng, const ModeBasis& basis, double cx, double cy) {
    std::vector<double> l(basis.size(), 0.0);
    for (std::size_t k = 0; k < basis.size(); ++k) {
        switch (basis.modes[k].role) {
            case wmseg::ModeRole::translation_x:
                l[k] = cx + uniform(rng, -2.0, 2.0);
                break;
            case wmseg::ModeRole::translation_y:
                l[k] = cy + uniform(rng, -2.0, 2.0);
                break;
            case wmseg::ModeRole::rotation:
                l[k] = uniform(rng, -0.4, 0.4);
                break;
            default:
                l[k] = uniform(rng, -1.0, 1.0);
                break;
        }
    }
    return l;
}

} // namespace testing
