#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "wmseg/geometry.hpp"

namespace wmseg {

using FeatureVector = std::vector<double>;

// Absolute tolerance used by every mass and capacity check.
inline constexpr double kMassTolerance = 1e-9;

// Template X with masses mu, expected features f_x and an optional boundary contour.
struct TemplateShape {
    std::vector<Point2> points;
    std::vector<double> masses;
    std::vector<FeatureVector> features;
    std::optional<Polygon> contour;

    std::size_t size() const { return points.size(); }
    double total_mass() const;

    // Throws Error("template.invalid") when an invariant is violated.
    void validate() const;
};

struct Edge {
    std::size_t a = 0;
    std::size_t b = 0;
    double weight = 0.0;
};

// Raster layout for image domains that came from a pixel grid. Point k sits at
// column k % width, row k / width.
struct RasterShape {
    std::size_t width = 0;
    std::size_t height = 0;
};

// Image support Y with capacities m_y, observed features f_y and optional TV adjacency.
struct ImageDomain {
    std::vector<Point2> points;
    std::vector<double> capacities;
    std::vector<FeatureVector> features;
    std::vector<Edge> adjacency;
    std::optional<RasterShape> raster;

    std::size_t size() const { return points.size(); }
    double total_capacity() const;
    void validate() const;
};

// Builds the default 4-neighbour adjacency for points on a common lattice, with
// a_{y,y'} equal to the shared boundary length (the lattice spacing).
std::vector<Edge> lattice_adjacency(std::span<const Point2> points);

// Undirected edges stored once each. Throws on out-of-range indices, self loops,
// and negative or non-finite weights.
void check_adjacency(std::span<const Edge> edges, std::size_t node_count);

struct Segmentation {
    std::vector<double> nu;

    // u_nu(j) = nu_j / m_j.
    std::vector<double> indicator(const ImageDomain& domain) const;
    // Thresholded indicator (u >= 0.5).
    std::vector<std::uint8_t> mask(const ImageDomain& domain) const;
};

// Pseudo image index absorbing mass that would need pairs outside the truncation radius.
inline constexpr std::int64_t kOverflow = -1;

struct CouplingEntry {
    std::size_t i = 0;
    std::int64_t j = 0;  // image index or kOverflow
    double mass = 0.0;
};

struct Coupling {
    std::vector<CouplingEntry> entries;

    double total_mass() const;
    double overflow_mass() const;
    // Throws Error("coupling.invalid") on non-positive masses or duplicate pairs.
    void validate() const;
};

struct Marginals {
    std::vector<double> template_side;
    std::vector<double> image_side;  // overflow mass excluded
};

Marginals marginals(const Coupling& pi, std::size_t template_count, std::size_t image_count);

// nu_j = image-side marginal; fails when a capacity is exceeded by more than kMassTolerance.
Segmentation project_to_segmentation(const Coupling& pi, const ImageDomain& domain);

// Cost table c(i, j) stored per template label: c(i, j) = values[label[i] * image_count + j].
// One label per template point gives a dense matrix; a single label gives a
// spatially homogeneous template appearance.
struct CostTable {
    std::vector<std::uint32_t> labels;
    std::vector<double> values;
    std::size_t image_count = 0;

    static CostTable dense(std::size_t template_count, std::size_t image_count, std::vector<double> values);
    static CostTable homogeneous(std::size_t template_count, std::vector<double> per_image);

    double at(std::size_t i, std::size_t j) const { return values[labels[i] * image_count + j]; }
    std::span<const double> row(std::size_t i) const {
        return {values.data() + labels[i] * image_count, image_count};
    }
    std::size_t label_count() const { return image_count == 0 ? 0 : values.size() / image_count; }
};

// Feature matching cost c_F plus optional first-order corrections c_{F,k}, one per mode:
// c(i, j; lambda) = c_F(i, j) + sum_k lambda_k c_{F,k}(i, j).
struct FeatureCost {
    enum class Kind { none, squared_euclidean, table };

    Kind kind = Kind::squared_euclidean;
    CostTable table;                     // used when kind == table
    std::vector<CostTable> corrections;  // empty or one per mode

    static FeatureCost none() { return FeatureCost{Kind::none, {}, {}}; }
    static FeatureCost squared_euclidean() { return FeatureCost{Kind::squared_euclidean, {}, {}}; }
    static FeatureCost from_table(CostTable t) { return FeatureCost{Kind::table, std::move(t), {}}; }

    bool has_corrections() const { return !corrections.empty(); }
    void validate(const TemplateShape& tmpl, const ImageDomain& image, std::size_t mode_count) const;

    // Base cost c_F(i, j) for all j at once.
    void base_row(const TemplateShape& tmpl, const ImageDomain& image, std::size_t i, std::span<double> out) const;
};

double feature_cost_eval(const FeatureCost& cost, const TemplateShape& tmpl, const ImageDomain& image,
                         std::size_t i, std::size_t j, std::span<const double> lambda);

} // namespace wmseg
