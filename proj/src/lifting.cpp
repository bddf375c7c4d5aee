#include "wmseg/lifting.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <string>

#include "wmseg/error.hpp"

namespace wmseg {

// Bordered system [A e; m 0] of the discrete Neumann problem: 5-point Laplacian rows
// for interior cells (with a shared compatibility unknown), mirror rows for ghosts,
// and a final mean-zero row over the interior cells.
struct NeumannSystem {
    Eigen::SparseMatrix<double> matrix;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
};

namespace {

struct Foot {
    Point2 point{};
    Point2 normal{};
    std::size_t edge = 0;
    double fraction = 0.0;
    double distance = std::numeric_limits<double>::infinity();
};

Foot nearest_on_contour(const Polygon& contour, Point2 p, double orient) {
    Foot best;
    const std::size_t k = contour.size();
    for (std::size_t v = 0; v < k; ++v) {
        const Point2 a = contour[v];
        const Point2 e = contour[(v + 1) % k] - a;
        const double len2 = norm2(e);
        if (len2 == 0.0) continue;
        const double f = std::clamp(dot(p - a, e) / len2, 0.0, 1.0);
        const Point2 q = a + f * e;
        const double d = norm(p - q);
        if (d < best.distance) {
            const double len = std::sqrt(len2);
            best = {q, {orient * e.y / len, -orient * e.x / len}, v, f, d};
        }
    }
    return best;
}

} // namespace

NeumannGrid NeumannGrid::from_contour(const Polygon& contour, double spacing) {
    if (!(spacing > 0.0) || !std::isfinite(spacing)) throw Error("lifting.invalid_grid", "grid spacing must be > 0");
    if (contour.size() < 3 || !is_simple(contour)) {
        throw Error("lifting.invalid_grid", "contour must be a simple polygon with at least 3 vertices");
    }
    NeumannGrid g;
    g.spacing_ = spacing;
    g.contour_ = contour;
    g.contour_area_ = std::abs(signed_area(contour));
    const double orient = signed_area(contour) < 0.0 ? -1.0 : 1.0;

    double min_x = contour[0].x, max_x = contour[0].x, min_y = contour[0].y, max_y = contour[0].y;
    for (const Point2& p : contour) {
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    }
    // Cell centres sit on multiples of the spacing so that rasterized templates coincide with them.
    g.origin_ = {(std::floor(min_x / spacing) - 2.0) * spacing, (std::floor(min_y / spacing) - 2.0) * spacing};
    g.nx_ = static_cast<std::size_t>(std::ceil((max_x - g.origin_.x) / spacing)) + 3;
    g.ny_ = static_cast<std::size_t>(std::ceil((max_y - g.origin_.y) / spacing)) + 3;
    g.raster_.assign(g.nx_ * g.ny_, -1);
    for (std::size_t iy = 0; iy < g.ny_; ++iy) {
        for (std::size_t ix = 0; ix < g.nx_; ++ix) {
            const Point2 c{g.origin_.x + static_cast<double>(ix) * spacing,
                           g.origin_.y + static_cast<double>(iy) * spacing};
            if (!contains(contour, c)) continue;
            g.raster_[iy * g.nx_ + ix] = static_cast<std::int64_t>(g.centers_.size());
            g.centers_.push_back(c);
            g.cell_ix_.push_back(ix);
            g.cell_iy_.push_back(iy);
        }
    }
    const std::size_t n = g.centers_.size();
    if (n < 4) throw Error("lifting.invalid_grid", "fewer than four grid cells lie inside the contour");

    // Interior must be 4-connected.
    std::vector<char> seen(n, 0);
    std::queue<std::size_t> queue;
    queue.push(0);
    seen[0] = 1;
    std::size_t reached = 1;
    while (!queue.empty()) {
        const std::size_t c = queue.front();
        queue.pop();
        for (const auto& [di, dj] : {std::pair{1, 0}, std::pair{-1, 0}, std::pair{0, 1}, std::pair{0, -1}}) {
            const std::int64_t nb = g.neighbour(c, di, dj);
            if (nb >= 0 && !seen[static_cast<std::size_t>(nb)]) {
                seen[static_cast<std::size_t>(nb)] = 1;
                ++reached;
                queue.push(static_cast<std::size_t>(nb));
            }
        }
    }
    if (reached != n) throw Error("lifting.invalid_grid", "grid interior is disconnected; use a finer spacing");

    // Ghost layer: exterior 4-neighbours of interior cells.
    for (std::size_t c = 0; c < n; ++c) {
        for (const auto& [di, dj] : {std::pair{1, 0}, std::pair{-1, 0}, std::pair{0, 1}, std::pair{0, -1}}) {
            const std::size_t ix = g.cell_ix_[c] + static_cast<std::size_t>(static_cast<std::int64_t>(di));
            const std::size_t iy = g.cell_iy_[c] + static_cast<std::size_t>(static_cast<std::int64_t>(dj));
            std::int64_t& slot = g.raster_[iy * g.nx_ + ix];
            if (slot >= 0) continue;
            slot = static_cast<std::int64_t>(n + g.ghosts_.size());
            GhostCell gh;
            gh.center = {g.origin_.x + static_cast<double>(ix) * spacing, g.origin_.y + static_cast<double>(iy) * spacing};
            g.ghosts_.push_back(gh);
        }
    }

    // Mirror points: ghost centre reflected through the contour, at least 1.5 cells deep.
    for (GhostCell& gh : g.ghosts_) {
        const Foot f = nearest_on_contour(contour, gh.center, orient);
        gh.foot = f.point;
        gh.edge = f.edge;
        gh.fraction = f.fraction;
        gh.normal = f.distance > 1e-9 * spacing ? (1.0 / f.distance) * (gh.center - f.point) : f.normal;
        if (dot(gh.normal, f.normal) < 0.0) gh.normal = f.normal;
        const double depth = std::max(f.distance, 1.5 * spacing);
        const Point2 mirror = f.point - depth * gh.normal;
        gh.reach = dot(gh.center - mirror, gh.normal);
        const double fx = (mirror.x - g.origin_.x) / spacing;
        const double fy = (mirror.y - g.origin_.y) / spacing;
        const auto ix0 = static_cast<std::int64_t>(std::floor(fx));
        const auto iy0 = static_cast<std::int64_t>(std::floor(fy));
        const double tx = fx - static_cast<double>(ix0);
        const double ty = fy - static_cast<double>(iy0);
        double wsum = 0.0;
        for (int k = 0; k < 4; ++k) {
            const int dx = k & 1, dy = k >> 1;
            const std::int64_t u = g.at(ix0 + dx, iy0 + dy);
            const double w = (dx ? tx : 1.0 - tx) * (dy ? ty : 1.0 - ty);
            if (u < 0) continue;
            gh.stencil[static_cast<std::size_t>(k)] = u;
            gh.weights[static_cast<std::size_t>(k)] = w;
            wsum += w;
        }
        if (wsum > 0.0) {
            for (double& w : gh.weights) w /= wsum;
        } else {
            gh.stencil = {static_cast<std::int64_t>(g.nearest_cell(mirror)), -1, -1, -1};
            gh.weights = {1.0, 0.0, 0.0, 0.0};
        }
    }

    const std::size_t total = n + g.ghosts_.size();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(6 * n + 5 * g.ghosts_.size() + n);
    const auto kappa = static_cast<Eigen::Index>(total);
    for (std::size_t c = 0; c < n; ++c) {
        const auto row = static_cast<Eigen::Index>(c);
        trips.emplace_back(row, row, -4.0);
        for (const auto& [di, dj] : {std::pair{1, 0}, std::pair{-1, 0}, std::pair{0, 1}, std::pair{0, -1}}) {
            const std::int64_t u = g.at(static_cast<std::int64_t>(g.cell_ix_[c]) + di,
                                        static_cast<std::int64_t>(g.cell_iy_[c]) + dj);
            trips.emplace_back(row, static_cast<Eigen::Index>(u), 1.0);
        }
        trips.emplace_back(row, kappa, -1.0);
        trips.emplace_back(kappa, row, 1.0 / static_cast<double>(n));
    }
    for (std::size_t k = 0; k < g.ghosts_.size(); ++k) {
        const auto row = static_cast<Eigen::Index>(n + k);
        trips.emplace_back(row, row, 1.0);
        const GhostCell& gh = g.ghosts_[k];
        for (std::size_t s = 0; s < 4; ++s) {
            if (gh.stencil[s] >= 0) trips.emplace_back(row, static_cast<Eigen::Index>(gh.stencil[s]), -gh.weights[s]);
        }
    }
    auto sys = std::make_shared<NeumannSystem>();
    sys->matrix.resize(kappa + 1, kappa + 1);
    sys->matrix.setFromTriplets(trips.begin(), trips.end());
    sys->matrix.makeCompressed();
    sys->lu.compute(sys->matrix);
    if (sys->lu.info() != Eigen::Success) {
        throw Error("lifting.numerical", "Neumann system is singular on this grid; use a finer spacing");
    }
    g.system_ = std::move(sys);
    return g;
}

std::int64_t NeumannGrid::at(std::int64_t ix, std::int64_t iy) const {
    if (ix < 0 || iy < 0 || ix >= static_cast<std::int64_t>(nx_) || iy >= static_cast<std::int64_t>(ny_)) return -1;
    return raster_[static_cast<std::size_t>(iy) * nx_ + static_cast<std::size_t>(ix)];
}

std::int64_t NeumannGrid::interior_at(std::int64_t ix, std::int64_t iy) const {
    const std::int64_t u = at(ix, iy);
    return u >= 0 && static_cast<std::size_t>(u) < centers_.size() ? u : -1;
}

std::int64_t NeumannGrid::neighbour(std::size_t cell, int di, int dj) const {
    return interior_at(static_cast<std::int64_t>(cell_ix_[cell]) + di, static_cast<std::int64_t>(cell_iy_[cell]) + dj);
}

std::size_t NeumannGrid::nearest_cell(Point2 p) const {
    const auto cx = static_cast<std::int64_t>(std::llround((p.x - origin_.x) / spacing_));
    const auto cy = static_cast<std::int64_t>(std::llround((p.y - origin_.y) / spacing_));
    const auto max_ring = static_cast<std::int64_t>(std::max(nx_, ny_));
    std::int64_t best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    std::int64_t found_ring = -1;
    for (std::int64_t r = 0; r <= max_ring; ++r) {
        if (found_ring >= 0 && r > found_ring + 1) break;
        for (std::int64_t dy = -r; dy <= r; ++dy) {
            for (std::int64_t dx = -r; dx <= r; ++dx) {
                if (std::max(std::abs(dx), std::abs(dy)) != r) continue;
                const std::int64_t c = interior_at(cx + dx, cy + dy);
                if (c < 0) continue;
                const double d = norm2(centers_[static_cast<std::size_t>(c)] - p);
                if (d < best_d || (d == best_d && c < best)) {
                    best_d = d;
                    best = c;
                }
                if (found_ring < 0) found_ring = r;
            }
        }
    }
    return static_cast<std::size_t>(best);
}

std::vector<Point2> NeumannGrid::gradient(std::span<const double> u) const {
    if (u.size() != centers_.size() + ghosts_.size()) {
        throw Error("lifting.invalid_data", "gradient needs one value per interior and ghost cell");
    }
    std::vector<Point2> grad(centers_.size());
    const double h2 = 2.0 * spacing_;
    for (std::size_t c = 0; c < centers_.size(); ++c) {
        const auto ix = static_cast<std::int64_t>(cell_ix_[c]);
        const auto iy = static_cast<std::int64_t>(cell_iy_[c]);
        const auto v = [&](std::int64_t x, std::int64_t y) { return u[static_cast<std::size_t>(at(x, y))]; };
        grad[c] = {(v(ix + 1, iy) - v(ix - 1, iy)) / h2, (v(ix, iy + 1) - v(ix, iy - 1)) / h2};
    }
    return grad;
}

std::vector<Point2> NeumannGrid::sample(std::span<const Point2> field, std::span<const Point2> points) const {
    std::vector<Point2> out;
    out.reserve(points.size());
    for (const Point2& p : points) {
        const double fx = (p.x - origin_.x) / spacing_;
        const double fy = (p.y - origin_.y) / spacing_;
        const auto ix0 = static_cast<std::int64_t>(std::floor(fx));
        const auto iy0 = static_cast<std::int64_t>(std::floor(fy));
        const double tx = fx - static_cast<double>(ix0);
        const double ty = fy - static_cast<double>(iy0);
        Point2 acc{};
        bool complete = true;
        for (int k = 0; k < 4 && complete; ++k) {
            const int dx = k & 1, dy = k >> 1;
            const std::int64_t c = interior_at(ix0 + dx, iy0 + dy);
            const double w = (dx ? tx : 1.0 - tx) * (dy ? ty : 1.0 - ty);
            if (c < 0) {
                complete = w == 0.0;
                continue;
            }
            acc = acc + w * field[static_cast<std::size_t>(c)];
        }
        if (complete) {
            out.push_back(acc);
            continue;
        }
        // Near the contour: affine fit of the cells in the surrounding 4 x 4 block.
        Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
        Eigen::Matrix<double, 3, 2> atb = Eigen::Matrix<double, 3, 2>::Zero();
        std::size_t used = 0;
        for (std::int64_t dy = -1; dy <= 2; ++dy) {
            for (std::int64_t dx = -1; dx <= 2; ++dx) {
                const std::int64_t c = interior_at(ix0 + dx, iy0 + dy);
                if (c < 0) continue;
                const Point2 q = centers_[static_cast<std::size_t>(c)] - p;
                const Eigen::Vector3d row(1.0, q.x / spacing_, q.y / spacing_);
                ata += row * row.transpose();
                atb.col(0) += row * field[static_cast<std::size_t>(c)].x;
                atb.col(1) += row * field[static_cast<std::size_t>(c)].y;
                ++used;
            }
        }
        const Eigen::LDLT<Eigen::Matrix3d> fit(ata);
        if (used >= 3 && fit.info() == Eigen::Success && fit.rcond() > 1e-8) {
            const Eigen::Matrix<double, 3, 2> coef = fit.solve(atb);
            out.push_back({coef(0, 0), coef(0, 1)});
        } else {
            out.push_back(field[nearest_cell(p)]);
        }
    }
    return out;
}

LiftResult lift_contour_deformation(const NeumannGrid& grid, std::span<const double> vertex_values,
                                    std::span<const Point2> points) {
    const Polygon& contour = grid.contour();
    if (vertex_values.size() != contour.size()) {
        throw Error("lifting.invalid_data", "boundary data needs one value per contour vertex");
    }
    const std::size_t k = contour.size();
    double flow = 0.0;
    for (std::size_t v = 0; v < k; ++v) {
        flow += 0.5 * (vertex_values[v] + vertex_values[(v + 1) % k]) * norm(contour[(v + 1) % k] - contour[v]);
    }
    LiftResult res;
    res.flow_constant = flow / grid.contour_area();

    const double h = grid.spacing();
    const std::size_t n = grid.cell_count();
    const auto& ghosts = grid.ghosts();
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(n + ghosts.size() + 1));
    rhs.setZero();
    for (std::size_t c = 0; c < n; ++c) rhs(static_cast<Eigen::Index>(c)) = h * h * res.flow_constant;
    for (std::size_t g = 0; g < ghosts.size(); ++g) {
        const GhostCell& gh = ghosts[g];
        const double a = (1.0 - gh.fraction) * vertex_values[gh.edge] + gh.fraction * vertex_values[(gh.edge + 1) % k];
        rhs(static_cast<Eigen::Index>(n + g)) = gh.reach * a;
    }
    const NeumannSystem& sys = grid.system();
    const Eigen::VectorXd x = sys.lu.solve(rhs);
    const double scale = std::max(rhs.norm(), 1e-300);
    if (sys.lu.info() != Eigen::Success || !((sys.matrix * x - rhs).norm() <= 1e-10 * scale)) {
        throw Error("lifting.numerical", "Neumann solve did not reach residual 1e-10");
    }
    const std::vector<double> u(x.data(), x.data() + n + ghosts.size());
    res.cell_field = grid.gradient(u);
    res.potential.assign(u.begin(), u.begin() + static_cast<std::ptrdiff_t>(n));
    res.mode.displacements = grid.sample(res.cell_field, points);
    res.mode.role = ModeRole::statistical;
    res.mode.divergence_class = std::abs(res.flow_constant) > 1e-6 ? DivergenceClass::scale : DivergenceClass::zero_div;
    return res;
}

double mean_divergence(std::span<const Point2> field, const TemplateShape& tmpl) {
    const auto raster = RasterIndex::infer(tmpl.points);
    if (!raster) throw Error("modes.raster", "template points do not lie on a common lattice");
    if (field.size() != tmpl.size()) throw Error("modes.length", "field size differs from the template size");
    const double h = raster->spacing();
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < tmpl.size(); ++k) {
        const std::int64_t xp = raster->neighbour(k, 1, 0);
        const std::int64_t xm = raster->neighbour(k, -1, 0);
        const std::int64_t yp = raster->neighbour(k, 0, 1);
        const std::int64_t ym = raster->neighbour(k, 0, -1);
        if (xp < 0 || xm < 0 || yp < 0 || ym < 0) continue;
        sum += (field[static_cast<std::size_t>(xp)].x - field[static_cast<std::size_t>(xm)].x +
                field[static_cast<std::size_t>(yp)].y - field[static_cast<std::size_t>(ym)].y) /
               (2.0 * h);
        ++count;
    }
    return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

Decomposition decompose_mode(const Mode& mode, const TemplateShape& tmpl) {
    Decomposition d;
    d.scale_coeff = 0.5 * mean_divergence(mode.displacements, tmpl);
    const Mode scale = make_scale_mode(tmpl);
    d.zero_div_part = mode;
    for (std::size_t k = 0; k < tmpl.size(); ++k) {
        d.zero_div_part.displacements[k] = mode.displacements[k] - d.scale_coeff * scale.displacements[k];
    }
    d.zero_div_part.divergence_class = DivergenceClass::zero_div;
    return d;
}

std::vector<double> normal_displacement(const Polygon& mean, const Polygon& sample) {
    if (mean.size() != sample.size()) {
        throw Error("modes.invalid", "sample contour vertex count differs from the mean contour");
    }
    const auto normals = outward_normals(mean);
    std::vector<double> a(mean.size());
    for (std::size_t v = 0; v < mean.size(); ++v) a[v] = dot(sample[v] - mean[v], normals[v]);
    return a;
}

Polygon mean_contour(std::span<const Polygon> samples, std::size_t vertex_count) {
    if (samples.empty()) throw Error("modes.insufficient_data", "no contour samples");
    Polygon mean(vertex_count);
    for (const Polygon& s : samples) {
        const Polygon r = resample_uniform(s, vertex_count);
        for (std::size_t v = 0; v < vertex_count; ++v) mean[v] = mean[v] + r[v];
    }
    for (Point2& p : mean) p = (1.0 / static_cast<double>(samples.size())) * p;
    return mean;
}

namespace {

double inner(const std::vector<Point2>& a, const std::vector<Point2>& b, const std::vector<double>& mu) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += mu[i] * (a[i].x * b[i].x + a[i].y * b[i].y);
    return s;
}

// Gram-Schmidt step; returns false when `v` is (numerically) in the span of `basis`.
bool orthonormalize_against(std::vector<Point2>& v, const std::vector<std::vector<Point2>>& basis,
                            const std::vector<double>& mu) {
    const double before = std::sqrt(inner(v, v, mu));
    for (int pass = 0; pass < 2; ++pass) {
        for (const auto& b : basis) {
            const double c = inner(v, b, mu);
            for (std::size_t i = 0; i < v.size(); ++i) v[i] = v[i] - c * b[i];
        }
    }
    const double after = std::sqrt(inner(v, v, mu));
    if (!(after > 1e-8 * std::max(before, 1e-300))) return false;
    for (Point2& p : v) p = (1.0 / after) * p;
    return true;
}

} // namespace

LearnedModes learn_statistical_modes(const Polygon& mean, std::span<const Polygon> samples, std::size_t n_modes,
                                     const NeumannGrid& grid, const TemplateShape& tmpl) {
    if (samples.size() < n_modes || samples.empty()) {
        throw Error("modes.insufficient_data", "need at least as many contour samples as requested modes");
    }
    const std::size_t n = tmpl.size();
    const std::size_t count = samples.size();
    std::vector<std::vector<Point2>> fields;
    fields.reserve(count);
    for (const Polygon& s : samples) {
        if (s.size() != mean.size()) {
            throw Error("modes.invalid", "sample contour vertex count differs from the mean contour");
        }
        const auto a = normal_displacement(mean, s);
        fields.push_back(lift_contour_deformation(grid, a, tmpl.points).mode.displacements);
    }
    std::vector<Point2> avg(n);
    for (const auto& f : fields) {
        for (std::size_t i = 0; i < n; ++i) avg[i] = avg[i] + f[i];
    }
    for (Point2& p : avg) p = (1.0 / static_cast<double>(count)) * p;
    for (auto& f : fields) {
        for (std::size_t i = 0; i < n; ++i) f[i] = f[i] - avg[i];
    }

    Eigen::MatrixXd gram(count, count);
    for (std::size_t k = 0; k < count; ++k) {
        for (std::size_t l = k; l < count; ++l) {
            const double v = inner(fields[k], fields[l], tmpl.masses) / static_cast<double>(count);
            gram(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l)) = v;
            gram(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k)) = v;
        }
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    const double trace = gram.trace();

    LearnedModes out;
    std::vector<std::vector<Point2>> basis;
    for (std::size_t r = 0; r < n_modes; ++r) {
        // Eigen returns ascending eigenvalues.
        const auto col = static_cast<Eigen::Index>(count - 1 - r);
        const double value = std::max(eig.eigenvalues()(col), 0.0);
        std::vector<Point2> field(n);
        bool ok = false;
        if (value > 1e-14 * std::max(trace, 1e-300)) {
            for (std::size_t k = 0; k < count; ++k) {
                const double w = eig.eigenvectors()(static_cast<Eigen::Index>(k), col);
                for (std::size_t i = 0; i < n; ++i) field[i] = field[i] + w * fields[k][i];
            }
            ok = orthonormalize_against(field, basis, tmpl.masses);
        }
        if (!ok) {
            // Zero variance: complete with an arbitrary field orthonormal to the ones found so far.
            for (std::size_t cand = 0; cand < 2 * n && !ok; ++cand) {
                std::fill(field.begin(), field.end(), Point2{});
                const std::size_t i = cand / 2;
                field[i] = cand % 2 == 0 ? Point2{1.0, 0.0} : Point2{0.0, 1.0};
                ok = orthonormalize_against(field, basis, tmpl.masses);
            }
        }
        basis.push_back(field);
        out.sigmas.push_back(ok && value > 1e-14 * std::max(trace, 1e-300) ? std::sqrt(value) : 0.0);
    }
    for (auto& field : basis) {
        Mode raw{std::move(field), DivergenceClass::general, ModeRole::statistical};
        Decomposition d = decompose_mode(raw, tmpl);
        d.zero_div_part.role = ModeRole::statistical;
        out.scale_coeffs.push_back(d.scale_coeff);
        out.modes.push_back(std::move(d.zero_div_part));
        out.eigenfields.push_back(std::move(raw));
    }
    return out;
}

TemplateShape template_from_contour(const Polygon& contour, double spacing, double feature) {
    if (!(spacing > 0.0)) throw Error("template.invalid", "spacing must be > 0");
    double min_x = contour.at(0).x, max_x = contour[0].x, min_y = contour[0].y, max_y = contour[0].y;
    for (const Point2& p : contour) {
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    }
    TemplateShape t;
    const auto ix0 = static_cast<std::int64_t>(std::ceil(min_x / spacing));
    const auto ix1 = static_cast<std::int64_t>(std::floor(max_x / spacing));
    const auto iy0 = static_cast<std::int64_t>(std::ceil(min_y / spacing));
    const auto iy1 = static_cast<std::int64_t>(std::floor(max_y / spacing));
    for (std::int64_t iy = iy0; iy <= iy1; ++iy) {
        for (std::int64_t ix = ix0; ix <= ix1; ++ix) {
            const Point2 p{static_cast<double>(ix) * spacing, static_cast<double>(iy) * spacing};
            if (!contains(contour, p)) continue;
            t.points.push_back(p);
            t.masses.push_back(spacing * spacing);
            t.features.push_back({feature});
        }
    }
    if (t.points.empty()) throw Error("template.invalid", "no lattice point lies inside the contour");
    t.contour = contour;
    return t;
}

} // namespace wmseg
