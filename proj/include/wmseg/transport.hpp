#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "wmseg/measure.hpp"
#include "wmseg/modes.hpp"
#include "wmseg/simd/kernels.hpp"

namespace wmseg {

// Axis-aligned box of mode coefficients with an optional cached lower bound.
struct LambdaBox {
    std::vector<double> lower;
    std::vector<double> upper;
    std::optional<double> bound;

    static LambdaBox point(std::span<const double> lambda);

    std::size_t dim() const { return lower.size(); }
    std::vector<double> center() const;
    bool is_singleton() const;
    bool contains(std::span<const double> lambda) const;
    // Throws Error("box.invalid") unless lower <= upper componentwise and both are finite.
    void validate() const;
};

// Truncated cost matrix in CSR layout plus one overflow cost per row.
struct SparseCost {
    std::size_t template_count = 0;
    std::size_t image_count = 0;
    std::vector<std::size_t> row_start;  // template_count + 1 offsets
    std::vector<std::int32_t> cols;
    std::vector<double> values;
    std::vector<double> overflow;  // +inf removes the overflow column for that row
    double radius = std::numeric_limits<double>::infinity();
    // Largest distance between any candidate pair (ignoring truncation) and the
    // largest within-row spread of the non-geometric cost; used to decide when
    // truncation can no longer matter.
    double extent = 0.0;
    double feature_span = 0.0;
    std::size_t max_entries = 0;  // per-row cap used during assembly (0 = none)

    std::size_t nnz() const { return cols.size(); }
    std::span<const std::int32_t> row_cols(std::size_t i) const {
        return {cols.data() + row_start[i], row_start[i + 1] - row_start[i]};
    }
    std::span<const double> row_values(std::size_t i) const {
        return {values.data() + row_start[i], row_start[i + 1] - row_start[i]};
    }
    // Radius beyond which every pair is kept and overflow is never cheaper than a pair.
    double saturation_radius() const;
    // True when neither the radius nor the row cap can drop any pair.
    bool saturated() const;

    // Dense cost without overflow column (mainly for tests and oracles).
    static SparseCost dense(std::size_t template_count, std::size_t image_count, std::span<const double> values);
};

struct TransportResult {
    Coupling plan;
    double objective = 0.0;
};

// min sum c_ij pi_ij  s.t.  row sums = supplies, column sums <= capacities, pi >= 0,
// with an uncapacitated overflow column where cost.overflow is finite.
// Successive shortest paths with Dijkstra on reduced costs; ties resolve to the lowest node index.
// Throws Error("transport.infeasible") when the supplies cannot be routed.
TransportResult solve_partial_transport(const SparseCost& cost, std::span<const double> supplies,
                                        std::span<const double> capacities);

// Minkowski sum c + sum_k [-1, 1] g_k as a convex polygon for the polygon_sqdist kernel.
struct Zonotope {
    Point2 center{};
    simd::EdgeList edges;
    bool is_point = true;
};

Zonotope make_zonotope(Point2 center, std::span<const Point2> generators);

// min over lambda in box of |x + A lambda - y|^2, A = [t_1(x) ... t_n(x)].
// Exact up to a safety margin of 1e-9 subtracted for non-singleton boxes.
double box_min_quadratic(Point2 x, Point2 y, std::span<const Point2> mode_displacements_at_x, const LambdaBox& box);

// min over lambda in box of F(lambda).
double box_min_F(const ModeBasis& basis, const LambdaBox& box);

struct NearestMatch {
    std::vector<double> cost;          // c_min per image point
    std::vector<std::int32_t> source;  // arg min template index
};

// Cost assembly for one template/image/basis/feature-cost combination. Holds
// copies of its inputs plus precomputed structure-of-arrays coordinates and the
// per-label non-geometric cost rows tau * c_F + g.
struct RowCandidates {
    std::vector<std::uint32_t> index;
    std::vector<double> geo;
};

class CostModel {
  public:
    CostModel(TemplateShape tmpl, ImageDomain image, ModeBasis basis, FeatureCost fcost, double tau,
              std::vector<double> g_background);

    const TemplateShape& tmpl() const { return tmpl_; }
    const ImageDomain& image() const { return image_; }
    const ModeBasis& basis() const { return basis_; }
    const FeatureCost& fcost() const { return fcost_; }
    double tau() const { return tau_; }
    const std::vector<double>& g_background() const { return g_; }
    std::size_t mode_count() const { return basis_.size(); }
    // max_x |t_k(x)|
    double mode_magnitude(std::size_t k) const { return magnitude_[k]; }

    // T_lambda(x_i), bit-identical to apply_transform.
    void moved_points(std::span<const double> lambda, std::vector<double>& xs, std::vector<double>& ys) const;

    // tau * c_F(i, j; lambda) + g_j
    double feature_term(std::size_t i, std::size_t j, std::span<const double> lambda) const;
    // |T_lambda(x_i) - y_j|^2 + feature_term
    double pair_cost(std::size_t i, std::size_t j, std::span<const double> lambda) const;

    // Rows keep the pairs within `radius`; with max_entries > 0 only the cheapest
    // pairs strictly below the (max_entries + 1)-th smallest row cost survive. The
    // overflow cost is the smallest cost of any dropped pair (or its lower bound
    // r^2 + min feature term), so the truncated problem never exceeds the full one.
    SparseCost assemble(std::span<const double> lambda, double radius, std::size_t max_entries = 0) const;
    SparseCost assemble_bound(const LambdaBox& box, double radius, std::size_t max_entries = 0) const;

    // Starting truncation radius: three image spacings plus the distance at which
    // geometry outweighs the spread of the non-geometric cost.
    double default_radius() const;

    NearestMatch nearest(std::span<const double> lambda) const;
    // Per image point: min over template points and lambda in box of the pair cost.
    std::vector<double> nearest_bound(const LambdaBox& box) const;

  private:
    TemplateShape tmpl_;
    ImageDomain image_;
    ModeBasis basis_;
    FeatureCost fcost_;
    double tau_ = 1.0;
    std::vector<double> g_;

    std::vector<double> tx_, ty_, yx_, yy_;
    std::vector<std::vector<double>> dx_, dy_;
    std::vector<double> magnitude_;
    std::vector<std::uint32_t> label_;
    std::vector<double> unary_;  // label-major rows of tau * c_F + g
    double unary_span_ = 0.0;
    std::vector<double> label_min_, label_max_;
    double image_spacing_ = 1.0;

    Point2 bbox_lo_{}, bbox_hi_{};
    double bucket_size_ = 1.0;
    std::size_t bucket_nx_ = 1, bucket_ny_ = 1;
    std::vector<std::size_t> bucket_start_;
    std::vector<std::uint32_t> bucket_items_;
    std::vector<double> bucket_x_, bucket_y_;

    const double* unary_row(std::size_t i) const { return unary_.data() + label_[i] * image_.size(); }
    // Adds the lambda-dependent correction terms of row i to `row` (no-op without corrections).
    void add_corrections(std::size_t i, std::span<const double> lambda, std::span<double> row) const;
    void add_box_corrections(std::size_t i, const LambdaBox& box, std::span<double> row) const;
    Zonotope zonotope(std::size_t i, const LambdaBox& box) const;
    void box_sqdist(std::size_t i, const LambdaBox& box, std::span<double> out) const;
    // Image points within `radius` of the box image of template point i, in
    // ascending index order. Returns an upper bound on all box distances.
    double box_candidates(std::size_t i, const LambdaBox& box, double radius, RowCandidates& out) const;
    // tau * c_F + g plus corrections for row i (at lambda, or minimized over `box`).
    const double* row_features(std::size_t i, std::span<const double> lambda, const LambdaBox* box,
                               std::vector<double>& buffer, double& fmin, double& fmax) const;
    void check_lambda(std::size_t size) const;
};

// Convenience wrappers building a temporary CostModel.
SparseCost assemble_cost(const TemplateShape& tmpl, const ImageDomain& image, const ModeBasis& basis,
                         std::span<const double> lambda, const FeatureCost& fcost,
                         std::span<const double> g_background, double radius, double tau = 1.0);
SparseCost assemble_bound_cost(const TemplateShape& tmpl, const ImageDomain& image, const ModeBasis& basis,
                               const LambdaBox& box, const FeatureCost& fcost, std::span<const double> g_background,
                               double radius, double tau = 1.0);

} // namespace wmseg
