#include "wmseg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "wmseg/error.hpp"

namespace wmseg {

double norm(Point2 a) { return std::hypot(a.x, a.y); }

bool is_finite(Point2 p) { return std::isfinite(p.x) && std::isfinite(p.y); }

double signed_area(const Polygon& poly) {
    double twice = 0.0;
    const std::size_t n = poly.size();
    for (std::size_t k = 0; k < n; ++k) {
        twice += cross(poly[k], poly[(k + 1) % n]);
    }
    return 0.5 * twice;
}

double perimeter(const Polygon& poly) {
    double len = 0.0;
    const std::size_t n = poly.size();
    for (std::size_t k = 0; k < n; ++k) {
        len += norm(poly[(k + 1) % n] - poly[k]);
    }
    return len;
}

bool contains(const Polygon& poly, Point2 p) {
    // Even-odd crossing rule.
    bool inside = false;
    const std::size_t n = poly.size();
    for (std::size_t a = 0, b = n - 1; a < n; b = a++) {
        const Point2 pa = poly[a];
        const Point2 pb = poly[b];
        if ((pa.y > p.y) != (pb.y > p.y)) {
            const double xs = pa.x + (p.y - pa.y) * (pb.x - pa.x) / (pb.y - pa.y);
            if (p.x < xs) {
                inside = !inside;
            }
        }
    }
    return inside;
}

namespace {

double segment_distance(Point2 p, Point2 a, Point2 b) {
    const Point2 e = b - a;
    const double len2 = norm2(e);
    double t = len2 > 0.0 ? dot(p - a, e) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return norm(p - (a + t * e));
}

int orientation(Point2 a, Point2 b, Point2 c) {
    const double v = cross(b - a, c - a);
    if (v > 0.0) return 1;
    if (v < 0.0) return -1;
    return 0;
}

bool on_segment(Point2 a, Point2 b, Point2 p) {
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
           p.y <= std::max(a.y, b.y);
}

bool segments_intersect(Point2 p1, Point2 p2, Point2 q1, Point2 q2) {
    const int o1 = orientation(p1, p2, q1);
    const int o2 = orientation(p1, p2, q2);
    const int o3 = orientation(q1, q2, p1);
    const int o4 = orientation(q1, q2, p2);
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && on_segment(p1, p2, q1)) return true;
    if (o2 == 0 && on_segment(p1, p2, q2)) return true;
    if (o3 == 0 && on_segment(q1, q2, p1)) return true;
    if (o4 == 0 && on_segment(q1, q2, p2)) return true;
    return false;
}

} // namespace

double distance_to_boundary(const Polygon& poly, Point2 p) {
    double best = std::numeric_limits<double>::infinity();
    const std::size_t n = poly.size();
    for (std::size_t k = 0; k < n; ++k) {
        best = std::min(best, segment_distance(p, poly[k], poly[(k + 1) % n]));
    }
    return best;
}

bool is_simple(const Polygon& poly) {
    const std::size_t n = poly.size();
    if (n < 3) return false;
    for (std::size_t a = 0; a < n; ++a) {
        const Point2 a1 = poly[a];
        const Point2 a2 = poly[(a + 1) % n];
        if (a1 == a2) return false;
        for (std::size_t b = a + 1; b < n; ++b) {
            // Adjacent edges share a vertex by construction.
            if (b == a + 1 || (a == 0 && b == n - 1)) continue;
            if (segments_intersect(a1, a2, poly[b], poly[(b + 1) % n])) return false;
        }
    }
    return true;
}

Polygon ccw(const Polygon& poly) {
    Polygon out = poly;
    if (signed_area(out) < 0.0) {
        std::reverse(out.begin(), out.end());
        // Keep vertex 0 in place so callers can rely on its index.
        std::rotate(out.rbegin(), out.rbegin() + 1, out.rend());
    }
    return out;
}

Polygon resample_uniform(const Polygon& poly, std::size_t count) {
    if (poly.size() < 2 || count == 0) {
        throw Error("geometry.invalid", "resampling needs at least two vertices and a positive count");
    }
    const std::size_t n = poly.size();
    std::vector<double> cum(n + 1, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        cum[k + 1] = cum[k] + norm(poly[(k + 1) % n] - poly[k]);
    }
    const double total = cum[n];
    Polygon out;
    out.reserve(count);
    std::size_t seg = 0;
    for (std::size_t q = 0; q < count; ++q) {
        const double s = total * static_cast<double>(q) / static_cast<double>(count);
        while (seg + 1 < n && cum[seg + 1] <= s) ++seg;
        const double len = cum[seg + 1] - cum[seg];
        const double f = len > 0.0 ? (s - cum[seg]) / len : 0.0;
        const Point2 a = poly[seg];
        const Point2 b = poly[(seg + 1) % n];
        out.push_back(a + f * (b - a));
    }
    return out;
}

std::vector<Point2> outward_normals(const Polygon& poly) {
    const std::size_t n = poly.size();
    const double orient = signed_area(poly) >= 0.0 ? 1.0 : -1.0;
    std::vector<Point2> edge_normals(n);
    for (std::size_t k = 0; k < n; ++k) {
        const Point2 e = poly[(k + 1) % n] - poly[k];
        const double len = norm(e);
        // For a counter-clockwise polygon the outward normal of edge (dx, dy) is (dy, -dx).
        edge_normals[k] = len > 0.0 ? Point2{orient * e.y / len, -orient * e.x / len} : Point2{};
    }
    std::vector<Point2> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        const Point2 s = edge_normals[(k + n - 1) % n] + edge_normals[k];
        const double len = norm(s);
        out[k] = len > 0.0 ? (1.0 / len) * s : edge_normals[k];
    }
    return out;
}

Point2 centroid(std::span<const Point2> points) {
    Point2 c{};
    if (points.empty()) return c;
    for (const Point2& p : points) c = c + p;
    return (1.0 / static_cast<double>(points.size())) * c;
}

std::optional<RasterIndex> RasterIndex::infer(std::span<const Point2> points) {
    if (points.empty()) return std::nullopt;
    RasterIndex r;
    double min_x = points[0].x, min_y = points[0].y;
    for (const Point2& p : points) {
        min_x = std::min(min_x, p.x);
        min_y = std::min(min_y, p.y);
    }
    auto min_gap = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        double gap = std::numeric_limits<double>::infinity();
        for (std::size_t k = 1; k < v.size(); ++k) {
            const double d = v[k] - v[k - 1];
            if (d > 1e-9 * (1.0 + std::abs(v[k]))) gap = std::min(gap, d);
        }
        return gap;
    };
    std::vector<double> xs, ys;
    xs.reserve(points.size());
    ys.reserve(points.size());
    for (const Point2& p : points) {
        xs.push_back(p.x);
        ys.push_back(p.y);
    }
    double h = std::min(min_gap(xs), min_gap(ys));
    if (!std::isfinite(h)) h = 1.0;
    r.spacing_ = h;
    r.origin_ = {min_x, min_y};
    r.cell_i_.reserve(points.size());
    r.cell_j_.reserve(points.size());
    for (std::size_t k = 0; k < points.size(); ++k) {
        const double fi = (points[k].x - min_x) / h;
        const double fj = (points[k].y - min_y) / h;
        const double ri = std::round(fi);
        const double rj = std::round(fj);
        if (std::abs(fi - ri) > 1e-6 || std::abs(fj - rj) > 1e-6) return std::nullopt;
        const auto ci = static_cast<std::int64_t>(ri);
        const auto cj = static_cast<std::int64_t>(rj);
        r.cell_i_.push_back(ci);
        r.cell_j_.push_back(cj);
        if (!r.lookup_.emplace(key(ci, cj), static_cast<std::int64_t>(k)).second) return std::nullopt;
    }
    return r;
}

std::int64_t RasterIndex::neighbour(std::size_t k, int di, int dj) const {
    const auto it = lookup_.find(key(cell_i_[k] + di, cell_j_[k] + dj));
    return it == lookup_.end() ? -1 : it->second;
}

} // namespace wmseg
