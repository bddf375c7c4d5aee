#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

namespace wmseg {

struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }
    friend bool operator==(Point2 a, Point2 b) = default;
};

inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
inline double norm2(Point2 a) { return dot(a, a); }
double norm(Point2 a);

bool is_finite(Point2 p);

// Closed polylines: the last vertex connects back to the first.
using Polygon = std::vector<Point2>;

double signed_area(const Polygon& poly);
double perimeter(const Polygon& poly);
bool contains(const Polygon& poly, Point2 p);
double distance_to_boundary(const Polygon& poly, Point2 p);
bool is_simple(const Polygon& poly);

// Counter-clockwise copy of `poly`.
Polygon ccw(const Polygon& poly);

// Uniform arc-length resampling to `count` vertices, starting at vertex 0.
Polygon resample_uniform(const Polygon& poly, std::size_t count);

// Outward unit normals per vertex (average of the adjacent edge normals).
std::vector<Point2> outward_normals(const Polygon& poly);

Point2 centroid(std::span<const Point2> points);

// Axis-aligned raster inferred from a point list (pixel grids, rasterized templates).
// Lookup of the neighbour at integer offset (di, dj) is O(1).
class RasterIndex {
  public:
    // Returns nullopt if the points do not lie on a common axis-aligned lattice.
    static std::optional<RasterIndex> infer(std::span<const Point2> points);

    double spacing() const { return spacing_; }
    // Index of the point at lattice offset (di, dj) from point k, or -1.
    std::int64_t neighbour(std::size_t k, int di, int dj) const;

  private:
    double spacing_ = 1.0;
    Point2 origin_{};
    std::vector<std::int64_t> cell_i_, cell_j_;
    std::unordered_map<std::int64_t, std::int64_t> lookup_;

    static std::int64_t key(std::int64_t i, std::int64_t j) { return (i << 32) ^ (j & 0xffffffffLL); }
};

} // namespace wmseg
