#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "wmseg/geometry.hpp"
#include "wmseg/measure.hpp"
#include "wmseg/modes.hpp"

namespace wmseg {

// Exterior raster cell next to the region. Its value is tied to a mirror point
// inside the region through the Neumann condition along the contour normal.
struct GhostCell {
    Point2 center{};
    Point2 foot{};    // nearest contour point
    Point2 normal{};  // outward unit normal at the foot
    double reach = 0.0;  // distance from the ghost centre to its mirror point along the normal
    std::size_t edge = 0;  // contour edge holding the foot
    double fraction = 0.0;  // foot position along that edge in [0, 1]
    std::array<std::int64_t, 4> stencil{-1, -1, -1, -1};  // unknowns interpolating the mirror point
    std::array<double, 4> weights{};
};

struct NeumannSystem;

// Raster of the region enclosed by a contour. Cells whose centres lie inside the
// contour and their exterior 4-neighbours (ghost cells) are the unknowns of the
// Neumann problem; unknowns 0..cell_count()-1 are the interior cells.
class NeumannGrid {
  public:
    static NeumannGrid from_contour(const Polygon& contour, double spacing);

    double spacing() const { return spacing_; }
    std::size_t cell_count() const { return centers_.size(); }
    const std::vector<Point2>& centers() const { return centers_; }
    const std::vector<GhostCell>& ghosts() const { return ghosts_; }
    const Polygon& contour() const { return contour_; }
    double contour_area() const { return contour_area_; }
    // Interior-cell index of the 4-neighbour in direction (di, dj), or -1.
    std::int64_t neighbour(std::size_t cell, int di, int dj) const;

    // Central-difference gradient at the interior cells of a field given on all unknowns.
    std::vector<Point2> gradient(std::span<const double> u) const;
    // Interpolates a field given per interior cell: bilinear where the four
    // surrounding cells are interior, an affine least-squares fit of nearby cells otherwise.
    std::vector<Point2> sample(std::span<const Point2> field, std::span<const Point2> points) const;

    const NeumannSystem& system() const { return *system_; }

  private:
    double spacing_ = 1.0;
    Point2 origin_{};  // centre of raster cell (0, 0)
    std::size_t nx_ = 0, ny_ = 0;
    std::vector<std::int64_t> raster_;  // nx * ny, unknown index (interior or ghost) or -1
    std::vector<Point2> centers_;
    std::vector<std::size_t> cell_ix_, cell_iy_;
    std::vector<GhostCell> ghosts_;
    Polygon contour_;
    double contour_area_ = 0.0;
    std::shared_ptr<const NeumannSystem> system_;

    std::int64_t at(std::int64_t ix, std::int64_t iy) const;
    std::int64_t interior_at(std::int64_t ix, std::int64_t iy) const;
    std::size_t nearest_cell(Point2 p) const;
};

struct LiftResult {
    Mode mode;
    double flow_constant = 0.0;     // C = |Omega|^-1 * boundary integral of a
    std::vector<double> potential;  // u per interior cell, mean zero
    std::vector<Point2> cell_field; // grad u per interior cell
};

// Solves Laplace(u) = C in Omega, du/dn = a on the boundary, for boundary data given
// per contour vertex (linear along edges), and samples grad u at `points`.
LiftResult lift_contour_deformation(const NeumannGrid& grid, std::span<const double> vertex_values,
                                    std::span<const Point2> points);

struct Decomposition {
    Mode zero_div_part;
    double scale_coeff = 0.0;
};

// Splits t into a mean-divergence-free part and alpha * t_s, alpha = mean div(t) / 2.
// The divergence is taken on the raster formed by the template points.
Decomposition decompose_mode(const Mode& mode, const TemplateShape& tmpl);

// Mean central-difference divergence over raster points whose four neighbours exist.
double mean_divergence(std::span<const Point2> field, const TemplateShape& tmpl);

struct LearnedModes {
    std::vector<Mode> modes;        // decomposed (divergence-free part), role statistical
    std::vector<Mode> eigenfields;  // L2(mu)-orthonormal principal fields before decomposition
    std::vector<double> sigmas;     // sqrt of the covariance eigenvalues
    std::vector<double> scale_coeffs;
};

// Principal modes of normal contour deformations, lifted to the template region.
// Samples must be pre-aligned and have the mean contour's vertex count.
LearnedModes learn_statistical_modes(const Polygon& mean_contour, std::span<const Polygon> samples,
                                     std::size_t n_modes, const NeumannGrid& grid, const TemplateShape& tmpl);

// Signed normal displacement of each sample vertex relative to the mean contour.
std::vector<double> normal_displacement(const Polygon& mean_contour, const Polygon& sample);

// Vertex-wise mean after arc-length resampling to `vertex_count`.
Polygon mean_contour(std::span<const Polygon> samples, std::size_t vertex_count);

// Template made of the lattice cell centres (spacing h) inside the contour,
// mass h^2 each and a constant scalar feature.
TemplateShape template_from_contour(const Polygon& contour, double spacing, double feature = 1.0);

} // namespace wmseg
