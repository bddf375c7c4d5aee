#include "wmseg/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <random>

#include "wmseg/error.hpp"

namespace wmseg {

Polygon builtin_shape(std::string_view name, double size, std::size_t vertices) {
    if (!(size > 0.0)) throw Error("scenario.invalid", "shape size must be > 0");
    if (vertices < 8) throw Error("scenario.invalid", "shapes need at least 8 vertices");
    Polygon p;
    const double two_pi = 2.0 * std::numbers::pi;
    if (name == "rectangle") {
        const double w = size, h = 0.6 * size;
        return {{-w, -h}, {w, -h}, {w, h}, {-w, h}};
    }
    for (std::size_t k = 0; k < vertices; ++k) {
        const double t = two_pi * static_cast<double>(k) / static_cast<double>(vertices);
        double r = size;
        double sx = 1.0, sy = 1.0;
        if (name == "disk") {
        } else if (name == "ellipse") {
            sy = 0.6;
        } else if (name == "star") {
            r = size * (0.75 + 0.25 * std::cos(5.0 * t));
        } else if (name == "pear") {
            r = size * (0.8 + 0.2 * std::sin(t) + 0.1 * std::cos(2.0 * t));
        } else {
            throw Error("scenario.invalid", "unknown shape '" + std::string(name) + "'");
        }
        p.push_back({sx * r * std::cos(t), sy * r * std::sin(t)});
    }
    return p;
}

std::string_view to_string(NoiseSpec::Kind k) {
    switch (k) {
        case NoiseSpec::Kind::none: return "none";
        case NoiseSpec::Kind::local_gaussian: return "local-gaussian";
        case NoiseSpec::Kind::nonlocal_blobs: return "nonlocal-blobs";
        case NoiseSpec::Kind::occlusion: return "occlusion";
    }
    return "none";
}

NoiseSpec::Kind noise_kind_from_string(std::string_view s) {
    if (s == "none") return NoiseSpec::Kind::none;
    if (s == "local-gaussian") return NoiseSpec::Kind::local_gaussian;
    if (s == "nonlocal-blobs") return NoiseSpec::Kind::nonlocal_blobs;
    if (s == "occlusion") return NoiseSpec::Kind::occlusion;
    throw Error("config.invalid", "unknown noise kind '" + std::string(s) + "'");
}

Polygon transform_contour(const Polygon& contour, const TemplateShape& tmpl, const ModeBasis& basis,
                          std::span<const double> lambda) {
    if (lambda.size() != basis.size()) throw Error("modes.length", "lambda length does not match the mode count");
    const Point2 c = mass_centroid(tmpl);
    Polygon out = contour;
    for (std::size_t v = 0; v < contour.size(); ++v) {
        const Point2 x = contour[v];
        const Point2 rel = x - c;
        std::size_t nearest = 0;
        bool nearest_done = false;
        for (std::size_t k = 0; k < basis.size(); ++k) {
            if (lambda[k] == 0.0) continue;
            Point2 d;
            switch (basis.modes[k].role) {
                case ModeRole::translation_x: d = {1.0, 0.0}; break;
                case ModeRole::translation_y: d = {0.0, 1.0}; break;
                case ModeRole::rotation: d = {-rel.y, rel.x}; break;
                case ModeRole::scale: d = rel; break;
                case ModeRole::statistical:
                    if (!nearest_done) {
                        double best = std::numeric_limits<double>::infinity();
                        for (std::size_t i = 0; i < tmpl.size(); ++i) {
                            const double dd = norm2(tmpl.points[i] - x);
                            if (dd < best) {
                                best = dd;
                                nearest = i;
                            }
                        }
                        nearest_done = true;
                    }
                    d = basis.modes[k].displacements[nearest];
                    break;
            }
            out[v] = out[v] + lambda[k] * d;
        }
    }
    return out;
}

Scenario synth_scenario(const ScenarioSpec& spec) {
    if (!spec.tmpl.contour) throw Error("scenario.invalid", "scenario template needs a contour");
    if (spec.width == 0 || spec.height == 0) throw Error("scenario.invalid", "canvas must be non-empty");
    Scenario s;
    s.truth_contour = transform_contour(*spec.tmpl.contour, spec.tmpl, spec.basis, spec.lambda_star);
    for (const Point2& p : s.truth_contour) {
        if (p.x < 0.0 || p.y < 0.0 || p.x > static_cast<double>(spec.width - 1) ||
            p.y > static_cast<double>(spec.height - 1)) {
            throw Error("scenario.placement", "placed template leaves the canvas");
        }
    }
    const std::size_t n = spec.width * spec.height;
    s.truth_mask.assign(n, 0);
    s.clean_features.assign(n, 0.0);
    for (std::size_t r = 0; r < spec.height; ++r) {
        for (std::size_t c = 0; c < spec.width; ++c) {
            const Point2 p{static_cast<double>(c), static_cast<double>(r)};
            const bool in = contains(s.truth_contour, p);
            s.truth_mask[r * spec.width + c] = in ? 1 : 0;
            s.clean_features[r * spec.width + c] = in ? 1.0 : 0.0;
        }
    }
    std::vector<double> f = s.clean_features;
    std::mt19937_64 rng(spec.seed);
    const NoiseSpec& noise = spec.noise;
    switch (noise.kind) {
        case NoiseSpec::Kind::none:
            break;
        case NoiseSpec::Kind::local_gaussian: {
            std::normal_distribution<double> gauss(0.0, noise.std_dev);
            for (double& v : f) v += gauss(rng);
            break;
        }
        case NoiseSpec::Kind::nonlocal_blobs: {
            std::uniform_real_distribution<double> ux(0.0, static_cast<double>(spec.width - 1));
            std::uniform_real_distribution<double> uy(0.0, static_cast<double>(spec.height - 1));
            for (std::size_t b = 0; b < noise.count; ++b) {
                const Point2 center{ux(rng), uy(rng)};
                for (std::size_t r = 0; r < spec.height; ++r) {
                    for (std::size_t c = 0; c < spec.width; ++c) {
                        const Point2 p{static_cast<double>(c), static_cast<double>(r)};
                        if (norm(p - center) <= noise.size) f[r * spec.width + c] = 1.0;
                    }
                }
            }
            break;
        }
        case NoiseSpec::Kind::occlusion: {
            if (!(noise.fraction >= 0.0 && noise.fraction <= 1.0)) {
                throw Error("scenario.invalid", "occlusion fraction must lie in [0, 1]");
            }
            // Cut the object with a random half-plane and blank the exact requested share.
            std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
            const double a = angle(rng);
            const Point2 dir{std::cos(a), std::sin(a)};
            std::vector<std::pair<double, std::size_t>> fg;
            for (std::size_t k = 0; k < n; ++k) {
                if (s.truth_mask[k]) {
                    const Point2 p{static_cast<double>(k % spec.width), static_cast<double>(k / spec.width)};
                    fg.push_back({dot(p, dir), k});
                }
            }
            std::sort(fg.begin(), fg.end());
            const auto count = static_cast<std::size_t>(std::llround(noise.fraction * static_cast<double>(fg.size())));
            for (std::size_t q = 0; q < count; ++q) f[fg[fg.size() - 1 - q].second] = 0.0;
            break;
        }
    }
    s.image.raster = RasterShape{spec.width, spec.height};
    for (std::size_t r = 0; r < spec.height; ++r) {
        for (std::size_t c = 0; c < spec.width; ++c) {
            s.image.points.push_back({static_cast<double>(c), static_cast<double>(r)});
            s.image.capacities.push_back(1.0);
            s.image.features.push_back({f[r * spec.width + c]});
        }
    }
    s.image.adjacency = lattice_adjacency(s.image.points);
    return s;
}

std::vector<double> background_shift(const ImageDomain& image, const FeatureVector& background, double tau) {
    std::vector<double> g(image.size());
    for (std::size_t j = 0; j < image.size(); ++j) {
        const auto& f = image.features[j];
        if (f.size() != background.size()) throw Error("feature.invalid", "background feature dimension mismatch");
        double d = 0.0;
        for (std::size_t k = 0; k < f.size(); ++k) d += (f[k] - background[k]) * (f[k] - background[k]);
        g[j] = -tau * d;
    }
    return g;
}

double mask_iou(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
    if (a.size() != b.size()) throw Error("io.invalid", "masks differ in size");
    std::size_t inter = 0, uni = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        inter += (a[k] && b[k]) ? 1 : 0;
        uni += (a[k] || b[k]) ? 1 : 0;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

} // namespace wmseg
