#include "wmseg/measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <utility>

#include "wmseg/error.hpp"

namespace wmseg {

double TemplateShape::total_mass() const { return std::accumulate(masses.begin(), masses.end(), 0.0); }

void TemplateShape::validate() const {
    if (points.empty()) throw Error("template.invalid", "template has no points");
    if (masses.size() != points.size()) throw Error("template.invalid", "masses length differs from points length");
    if (features.size() != points.size()) {
        throw Error("template.invalid", "features length differs from points length");
    }
    for (std::size_t k = 0; k < points.size(); ++k) {
        if (!is_finite(points[k])) throw Error("template.invalid", "non-finite template point " + std::to_string(k));
        if (!(masses[k] > 0.0) || !std::isfinite(masses[k])) {
            throw Error("template.invalid", "template mass must be positive at " + std::to_string(k));
        }
    }
    if (contour) {
        if (!is_simple(*contour)) throw Error("template.invalid", "template contour is not a simple polygon");
        for (std::size_t k = 0; k < points.size(); ++k) {
            if (!contains(*contour, points[k]) && distance_to_boundary(*contour, points[k]) > 1e-9) {
                throw Error("template.invalid", "template point " + std::to_string(k) + " lies outside the contour");
            }
        }
    }
}

double ImageDomain::total_capacity() const { return std::accumulate(capacities.begin(), capacities.end(), 0.0); }

void ImageDomain::validate() const {
    if (capacities.size() != points.size()) throw Error("image.invalid", "capacities length differs from points");
    if (features.size() != points.size()) throw Error("image.invalid", "features length differs from points");
    for (std::size_t k = 0; k < points.size(); ++k) {
        if (!is_finite(points[k])) throw Error("image.invalid", "non-finite image point " + std::to_string(k));
        if (!(capacities[k] > 0.0) || !std::isfinite(capacities[k])) {
            throw Error("image.invalid", "image capacity must be positive at " + std::to_string(k));
        }
    }
    if (raster && raster->width * raster->height != points.size()) {
        throw Error("image.invalid", "raster shape does not match the point count");
    }
    check_adjacency(adjacency, points.size());
}

std::vector<Edge> lattice_adjacency(std::span<const Point2> points) {
    std::vector<Edge> edges;
    const auto raster = RasterIndex::infer(points);
    if (!raster) return edges;
    for (std::size_t k = 0; k < points.size(); ++k) {
        for (const auto& [di, dj] : {std::pair{1, 0}, std::pair{0, 1}}) {
            const std::int64_t n = raster->neighbour(k, di, dj);
            if (n >= 0) edges.push_back({k, static_cast<std::size_t>(n), raster->spacing()});
        }
    }
    return edges;
}

void check_adjacency(std::span<const Edge> edges, std::size_t node_count) {
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const Edge& e : edges) {
        if (e.a >= node_count || e.b >= node_count) throw Error("adjacency.invalid", "edge index out of range");
        if (e.a == e.b) throw Error("adjacency.invalid", "self loop in adjacency");
        if (!(e.weight >= 0.0) || !std::isfinite(e.weight)) {
            throw Error("adjacency.invalid", "edge weights must be finite and non-negative");
        }
        if (!seen.emplace(std::min(e.a, e.b), std::max(e.a, e.b)).second) {
            throw Error("adjacency.invalid", "duplicate edge " + std::to_string(e.a) + "," + std::to_string(e.b));
        }
    }
}

std::vector<double> Segmentation::indicator(const ImageDomain& domain) const {
    std::vector<double> u(nu.size());
    for (std::size_t j = 0; j < nu.size(); ++j) u[j] = nu[j] / domain.capacities[j];
    return u;
}

std::vector<std::uint8_t> Segmentation::mask(const ImageDomain& domain) const {
    const auto u = indicator(domain);
    std::vector<std::uint8_t> m(u.size());
    for (std::size_t j = 0; j < u.size(); ++j) m[j] = u[j] >= 0.5 ? 1 : 0;
    return m;
}

double Coupling::total_mass() const {
    double s = 0.0;
    for (const auto& e : entries) s += e.mass;
    return s;
}

double Coupling::overflow_mass() const {
    double s = 0.0;
    for (const auto& e : entries) {
        if (e.j == kOverflow) s += e.mass;
    }
    return s;
}

void Coupling::validate() const {
    std::set<std::pair<std::size_t, std::int64_t>> seen;
    for (const auto& e : entries) {
        if (!(e.mass > 0.0) || !std::isfinite(e.mass)) throw Error("coupling.invalid", "coupling masses must be positive");
        if (e.j < kOverflow) throw Error("coupling.invalid", "negative image index");
        if (!seen.emplace(e.i, e.j).second) throw Error("coupling.invalid", "duplicate coupling entry");
    }
}

Marginals marginals(const Coupling& pi, std::size_t template_count, std::size_t image_count) {
    Marginals m{std::vector<double>(template_count, 0.0), std::vector<double>(image_count, 0.0)};
    for (const auto& e : pi.entries) {
        if (e.i >= template_count) throw Error("coupling.range", "template index out of range");
        if (e.j != kOverflow && (e.j < 0 || static_cast<std::size_t>(e.j) >= image_count)) {
            throw Error("coupling.range", "image index out of range");
        }
        m.template_side[e.i] += e.mass;
        if (e.j != kOverflow) m.image_side[static_cast<std::size_t>(e.j)] += e.mass;
    }
    return m;
}

Segmentation project_to_segmentation(const Coupling& pi, const ImageDomain& domain) {
    std::size_t template_count = 0;
    for (const auto& e : pi.entries) template_count = std::max(template_count, e.i + 1);
    auto m = marginals(pi, template_count, domain.size());
    for (std::size_t j = 0; j < domain.size(); ++j) {
        if (m.image_side[j] > domain.capacities[j] + kMassTolerance) {
            throw Error("coupling.invalid", "capacity exceeded at image point " + std::to_string(j));
        }
    }
    return Segmentation{std::move(m.image_side)};
}

CostTable CostTable::dense(std::size_t template_count, std::size_t image_count, std::vector<double> values) {
    if (values.size() != template_count * image_count) throw Error("feature.invalid", "dense cost table has wrong size");
    CostTable t;
    t.labels.resize(template_count);
    std::iota(t.labels.begin(), t.labels.end(), 0U);
    t.values = std::move(values);
    t.image_count = image_count;
    return t;
}

CostTable CostTable::homogeneous(std::size_t template_count, std::vector<double> per_image) {
    CostTable t;
    t.labels.assign(template_count, 0U);
    t.image_count = per_image.size();
    t.values = std::move(per_image);
    return t;
}

namespace {

void validate_table(const CostTable& t, std::size_t n, std::size_t m, const char* what) {
    if (t.labels.size() != n || t.image_count != m || t.values.size() % std::max<std::size_t>(m, 1) != 0) {
        throw Error("feature.invalid", std::string(what) + " table shape does not match template/image");
    }
    for (std::uint32_t l : t.labels) {
        if (l >= t.label_count()) throw Error("feature.invalid", std::string(what) + " label out of range");
    }
    for (double v : t.values) {
        if (!std::isfinite(v)) throw Error("feature.invalid", std::string(what) + " table has non-finite cost");
    }
}

} // namespace

void FeatureCost::validate(const TemplateShape& tmpl, const ImageDomain& image, std::size_t mode_count) const {
    if (kind == Kind::table) validate_table(table, tmpl.size(), image.size(), "feature");
    if (kind == Kind::squared_euclidean && !tmpl.features.empty() && !image.features.empty()) {
        const std::size_t d = tmpl.features.front().size();
        for (const auto& f : tmpl.features) {
            if (f.size() != d) throw Error("feature.invalid", "template feature dimensions differ");
        }
        for (const auto& f : image.features) {
            if (f.size() != d) throw Error("feature.invalid", "image feature dimension differs from template");
        }
    }
    if (!corrections.empty()) {
        if (corrections.size() != mode_count) {
            throw Error("feature.invalid", "feature correction count does not match the mode count");
        }
        for (const auto& c : corrections) validate_table(c, tmpl.size(), image.size(), "correction");
    }
}

void FeatureCost::base_row(const TemplateShape& tmpl, const ImageDomain& image, std::size_t i,
                           std::span<double> out) const {
    switch (kind) {
    case Kind::none:
        std::fill(out.begin(), out.end(), 0.0);
        break;
    case Kind::table: {
        const auto r = table.row(i);
        std::copy(r.begin(), r.end(), out.begin());
        break;
    }
    case Kind::squared_euclidean: {
        const FeatureVector& fx = tmpl.features[i];
        for (std::size_t j = 0; j < out.size(); ++j) {
            const FeatureVector& fy = image.features[j];
            double s = 0.0;
            for (std::size_t d = 0; d < fx.size(); ++d) {
                const double diff = fx[d] - fy[d];
                s += diff * diff;
            }
            out[j] = s;
        }
        break;
    }
    }
}

double feature_cost_eval(const FeatureCost& cost, const TemplateShape& tmpl, const ImageDomain& image,
                         std::size_t i, std::size_t j, std::span<const double> lambda) {
    if (i >= tmpl.size() || j >= image.size()) throw Error("feature.range", "feature cost index out of range");
    double base = 0.0;
    switch (cost.kind) {
    case FeatureCost::Kind::none:
        break;
    case FeatureCost::Kind::table:
        base = cost.table.at(i, j);
        break;
    case FeatureCost::Kind::squared_euclidean: {
        const FeatureVector& fx = tmpl.features[i];
        const FeatureVector& fy = image.features[j];
        for (std::size_t d = 0; d < fx.size(); ++d) {
            const double diff = fx[d] - fy[d];
            base += diff * diff;
        }
        break;
    }
    }
    if (cost.corrections.empty()) return base;
    if (lambda.size() != cost.corrections.size()) {
        throw Error("feature.range", "lambda length does not match the correction table count");
    }
    for (std::size_t k = 0; k < lambda.size(); ++k) base += lambda[k] * cost.corrections[k].at(i, j);
    return base;
}

} // namespace wmseg
