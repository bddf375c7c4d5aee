#include "wmseg/transport.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <queue>
#include <string>
#include <utility>

#include "wmseg/error.hpp"

namespace wmseg {

LambdaBox LambdaBox::point(std::span<const double> lambda) {
    LambdaBox b;
    b.lower.assign(lambda.begin(), lambda.end());
    b.upper = b.lower;
    return b;
}

std::vector<double> LambdaBox::center() const {
    std::vector<double> c(lower.size());
    for (std::size_t k = 0; k < c.size(); ++k) c[k] = 0.5 * (lower[k] + upper[k]);
    return c;
}

bool LambdaBox::is_singleton() const {
    for (std::size_t k = 0; k < lower.size(); ++k) {
        if (lower[k] != upper[k]) return false;
    }
    return true;
}

bool LambdaBox::contains(std::span<const double> lambda) const {
    if (lambda.size() != lower.size()) return false;
    for (std::size_t k = 0; k < lower.size(); ++k) {
        if (lambda[k] < lower[k] || lambda[k] > upper[k]) return false;
    }
    return true;
}

void LambdaBox::validate() const {
    if (lower.size() != upper.size()) throw Error("box.invalid", "box bounds differ in length");
    for (std::size_t k = 0; k < lower.size(); ++k) {
        if (!std::isfinite(lower[k]) || !std::isfinite(upper[k]) || lower[k] > upper[k]) {
            throw Error("box.invalid", "box axis " + std::to_string(k) + " has invalid bounds");
        }
    }
}

double SparseCost::saturation_radius() const { return std::sqrt(extent * extent + feature_span); }

bool SparseCost::saturated() const {
    return radius >= saturation_radius() && (max_entries == 0 || max_entries >= image_count);
}

SparseCost SparseCost::dense(std::size_t template_count, std::size_t image_count, std::span<const double> values) {
    if (values.size() != template_count * image_count) throw Error("cost.invalid", "dense cost has the wrong size");
    SparseCost c;
    c.template_count = template_count;
    c.image_count = image_count;
    c.row_start.push_back(0);
    for (std::size_t i = 0; i < template_count; ++i) {
        for (std::size_t j = 0; j < image_count; ++j) {
            c.cols.push_back(static_cast<std::int32_t>(j));
            c.values.push_back(values[i * image_count + j]);
        }
        c.row_start.push_back(c.cols.size());
    }
    c.overflow.assign(template_count, std::numeric_limits<double>::infinity());
    return c;
}

// ---------------------------------------------------------------------------
// Successive shortest paths

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

class PathSolver {
  public:
    PathSolver(const SparseCost& cost, std::span<const double> supplies, std::span<const double> capacities)
        : c_(cost), nx_(cost.template_count), ny_(cost.image_count), supply_(supplies.begin(), supplies.end()),
          cap_(capacities.begin(), capacities.end()) {
        node_count_ = nx_ + ny_ + 3;
        source_ = 0;
        overflow_node_ = 1 + nx_ + ny_;
        sink_ = 2 + nx_ + ny_;
        flow_.assign(c_.nnz(), 0.0);
        listed_.assign(c_.nnz(), 0);
        oflow_.assign(nx_, 0.0);
        back_.resize(ny_);
        entry_row_.resize(c_.nnz());
        for (std::size_t i = 0; i < nx_; ++i) {
            for (std::size_t e = c_.row_start[i]; e < c_.row_start[i + 1]; ++e) {
                entry_row_[e] = static_cast<std::uint32_t>(i);
            }
        }
        double scale = 0.0;
        for (double s : supply_) scale = std::max(scale, s);
        for (double m : cap_) scale = std::max(scale, m);
        eps_ = 1e-13 * std::max(scale, 1e-300);
        double cmax = 1.0;
        for (double v : c_.values) cmax = std::max(cmax, std::abs(v));
        for (double v : c_.overflow) {
            if (std::isfinite(v)) cmax = std::max(cmax, std::abs(v));
        }
        flat_ = 1e-12 * cmax;
        init_potentials();
    }

    TransportResult run() {
        std::vector<double> dist(node_count_);
        std::vector<std::size_t> pred(node_count_);
        std::vector<std::int64_t> pred_entry(node_count_);
        while (true) {
            double remaining = 0.0;
            for (double s : supply_) {
                if (s > eps_) remaining += s;
            }
            if (remaining == 0.0) break;
            if (!dijkstra(dist, pred, pred_entry)) {
                throw Error("transport.infeasible", "supplies exceed reachable capacity; deficit " +
                                                        std::to_string(remaining) + " mass");
            }
            augment(pred, pred_entry);
            augment_flat_paths(pred, pred_entry);
        }
        TransportResult res;
        for (std::size_t i = 0; i < nx_; ++i) {
            for (std::size_t e = c_.row_start[i]; e < c_.row_start[i + 1]; ++e) {
                if (flow_[e] <= 0.0) continue;
                res.objective += c_.values[e] * flow_[e];
                if (flow_[e] > eps_) res.plan.entries.push_back({i, c_.cols[e], flow_[e]});
            }
            if (oflow_[i] > 0.0) {
                res.objective += c_.overflow[i] * oflow_[i];
                if (oflow_[i] > eps_) res.plan.entries.push_back({i, kOverflow, oflow_[i]});
            }
        }
        return res;
    }

  private:
    const SparseCost& c_;
    std::size_t nx_, ny_;
    std::vector<double> supply_, cap_;
    std::size_t node_count_ = 0, source_ = 0, overflow_node_ = 0, sink_ = 0;
    std::vector<double> flow_, oflow_, pot_;
    std::vector<char> listed_;
    std::vector<std::vector<std::uint32_t>> back_;
    std::vector<std::uint32_t> entry_row_;
    std::vector<char> seen_;
    double eps_ = 0.0;
    double flat_ = 0.0;  // reduced costs below this count as zero

    std::size_t xnode(std::size_t i) const { return 1 + i; }
    std::size_t ynode(std::size_t j) const { return 1 + nx_ + j; }

    // Row potentials -m_i with m_i the cheapest option of row i make every arc of
    // reduced cost >= 0; the greedy flow along zero-cost arcs is then optimal for
    // its own marginals and the path phase only resolves capacity conflicts.
    void init_potentials() {
        pot_.assign(node_count_, 0.0);
        double lowest = kInf;
        for (std::size_t i = 0; i < nx_; ++i) {
            double m = c_.overflow[i];
            for (std::size_t e = c_.row_start[i]; e < c_.row_start[i + 1]; ++e) m = std::min(m, c_.values[e]);
            if (!std::isfinite(m)) continue;
            pot_[xnode(i)] = -m;
            lowest = std::min(lowest, m);
            if (c_.overflow[i] == m) {
                bool tied_entry = false;
                for (std::size_t e = c_.row_start[i]; e < c_.row_start[i + 1]; ++e) tied_entry |= c_.values[e] == m;
                if (!tied_entry) {
                    oflow_[i] += supply_[i];
                    supply_[i] = 0.0;
                    continue;
                }
            }
            for (std::size_t e = c_.row_start[i]; e < c_.row_start[i + 1] && supply_[i] > eps_; ++e) {
                const auto j = static_cast<std::size_t>(c_.cols[e]);
                if (c_.values[e] != m || cap_[j] <= eps_) continue;
                const double delta = std::min(supply_[i], cap_[j]);
                supply_[i] -= delta;
                cap_[j] -= delta;
                flow_[e] += delta;
                listed_[e] = 1;
                back_[j].push_back(static_cast<std::uint32_t>(e));
            }
        }
        pot_[source_] = std::isfinite(lowest) ? -lowest : 0.0;
    }

    // Shortest path tree from the source on reduced costs; returns false when the sink is unreachable.
    bool dijkstra(std::vector<double>& dist, std::vector<std::size_t>& pred, std::vector<std::int64_t>& pred_entry) {
        std::fill(dist.begin(), dist.end(), kInf);
        std::vector<char> done(node_count_, 0);
        using Item = std::pair<double, std::size_t>;
        std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
        dist[source_] = 0.0;
        heap.push({0.0, source_});
        auto relax = [&](std::size_t u, std::size_t v, double cost, std::int64_t entry) {
            const double nd = dist[u] + std::max(0.0, cost + pot_[u] - pot_[v]);
            if (nd < dist[v] || (nd == dist[v] && !done[v] && u < pred[v])) {
                dist[v] = nd;
                pred[v] = u;
                pred_entry[v] = entry;
                heap.push({nd, v});
            }
        };
        while (!heap.empty()) {
            const auto [d, u] = heap.top();
            heap.pop();
            if (done[u] || d > dist[u]) continue;
            done[u] = 1;
            if (u == sink_) break;
            if (u == source_) {
                for (std::size_t i = 0; i < nx_; ++i) {
                    if (supply_[i] > eps_) relax(u, xnode(i), 0.0, -1);
                }
            } else if (u <= nx_) {
                const std::size_t i = u - 1;
                for (std::size_t e = c_.row_start[i]; e < c_.row_start[i + 1]; ++e) {
                    relax(u, ynode(static_cast<std::size_t>(c_.cols[e])), c_.values[e], static_cast<std::int64_t>(e));
                }
                if (std::isfinite(c_.overflow[i])) relax(u, overflow_node_, c_.overflow[i], -1);
            } else if (u < overflow_node_) {
                const std::size_t j = u - 1 - nx_;
                if (cap_[j] > eps_) relax(u, sink_, 0.0, -1);
                for (std::uint32_t e : back_[j]) {
                    if (flow_[e] > eps_) relax(u, xnode(entry_row_[e]), -c_.values[e], e);
                }
            } else if (u == overflow_node_) {
                relax(u, sink_, 0.0, -1);
                for (std::size_t i = 0; i < nx_; ++i) {
                    if (oflow_[i] > eps_) relax(u, xnode(i), -c_.overflow[i], -1);
                }
            }
        }
        const double dt = dist[sink_];
        if (!std::isfinite(dt)) return false;
        for (std::size_t v = 0; v < node_count_; ++v) pot_[v] += std::min(dist[v], dt);
        return true;
    }

    bool flat(double reduced) const { return reduced <= flat_; }

    // Depth-first search for a source-sink path of zero reduced cost.
    bool flat_path(std::size_t u, std::vector<std::size_t>& pred, std::vector<std::int64_t>& pred_entry) {
        if (u == sink_) return true;
        seen_[u] = 1;
        auto step = [&](std::size_t v, double reduced, std::int64_t entry) {
            if (seen_[v] || !flat(reduced)) return false;
            pred[v] = u;
            pred_entry[v] = entry;
            return flat_path(v, pred, pred_entry);
        };
        if (u == source_) {
            for (std::size_t i = 0; i < nx_; ++i) {
                if (supply_[i] > eps_ && step(xnode(i), pot_[u] - pot_[xnode(i)], -1)) return true;
            }
        } else if (u <= nx_) {
            const std::size_t i = u - 1;
            for (std::size_t e = c_.row_start[i]; e < c_.row_start[i + 1]; ++e) {
                const std::size_t v = ynode(static_cast<std::size_t>(c_.cols[e]));
                if (step(v, c_.values[e] + pot_[u] - pot_[v], static_cast<std::int64_t>(e))) return true;
            }
            if (std::isfinite(c_.overflow[i]) &&
                step(overflow_node_, c_.overflow[i] + pot_[u] - pot_[overflow_node_], -1)) {
                return true;
            }
        } else if (u < overflow_node_) {
            const std::size_t j = u - 1 - nx_;
            if (cap_[j] > eps_ && step(sink_, pot_[u] - pot_[sink_], -1)) return true;
            for (std::uint32_t e : back_[j]) {
                if (flow_[e] <= eps_) continue;
                const std::size_t v = xnode(entry_row_[e]);
                if (step(v, -c_.values[e] + pot_[u] - pot_[v], e)) return true;
            }
        } else if (u == overflow_node_) {
            if (step(sink_, pot_[u] - pot_[sink_], -1)) return true;
            for (std::size_t i = 0; i < nx_; ++i) {
                if (oflow_[i] > eps_ && step(xnode(i), -c_.overflow[i] + pot_[u] - pot_[xnode(i)], -1)) return true;
            }
        }
        return false;
    }

    // Augments along further shortest paths without another Dijkstra pass.
    void augment_flat_paths(std::vector<std::size_t>& pred, std::vector<std::int64_t>& pred_entry) {
        seen_.assign(node_count_, 0);
        while (flat_path(source_, pred, pred_entry)) {
            augment(pred, pred_entry);
            for (std::size_t v = sink_; v != source_; v = pred[v]) seen_[v] = 0;
            seen_[source_] = 0;
        }
    }

    void augment(const std::vector<std::size_t>& pred, const std::vector<std::int64_t>& pred_entry) {
        double delta = kInf;
        for (std::size_t v = sink_; v != source_; v = pred[v]) {
            const std::size_t u = pred[v];
            if (u == source_) {
                delta = std::min(delta, supply_[v - 1]);
            } else if (v == sink_) {
                if (u != overflow_node_) delta = std::min(delta, cap_[u - 1 - nx_]);
            } else if (v <= nx_) {  // backward arc into a template node
                if (u == overflow_node_) {
                    delta = std::min(delta, oflow_[v - 1]);
                } else {
                    delta = std::min(delta, flow_[static_cast<std::size_t>(pred_entry[v])]);
                }
            }
        }
        for (std::size_t v = sink_; v != source_; v = pred[v]) {
            const std::size_t u = pred[v];
            if (u == source_) {
                supply_[v - 1] -= delta;
            } else if (v == sink_) {
                if (u != overflow_node_) cap_[u - 1 - nx_] -= delta;
            } else if (v <= nx_) {
                if (u == overflow_node_) {
                    oflow_[v - 1] -= delta;
                } else {
                    flow_[static_cast<std::size_t>(pred_entry[v])] -= delta;
                }
            } else if (v == overflow_node_) {
                oflow_[u - 1] += delta;
            } else {
                const auto e = static_cast<std::size_t>(pred_entry[v]);
                flow_[e] += delta;
                if (!listed_[e]) {
                    listed_[e] = 1;
                    back_[v - 1 - nx_].push_back(static_cast<std::uint32_t>(e));
                }
            }
        }
    }
};

} // namespace

TransportResult solve_partial_transport(const SparseCost& cost, std::span<const double> supplies,
                                        std::span<const double> capacities) {
    if (supplies.size() != cost.template_count || capacities.size() != cost.image_count ||
        cost.row_start.size() != cost.template_count + 1 || cost.overflow.size() != cost.template_count) {
        throw Error("transport.invalid", "cost, supplies and capacities have inconsistent sizes");
    }
    for (double s : supplies) {
        if (!(s >= 0.0) || !std::isfinite(s)) throw Error("transport.invalid", "supplies must be finite and >= 0");
    }
    for (double m : capacities) {
        if (!(m >= 0.0) || !std::isfinite(m)) throw Error("transport.invalid", "capacities must be finite and >= 0");
    }
    for (std::size_t e = 0; e < cost.nnz(); ++e) {
        if (!std::isfinite(cost.values[e])) throw Error("transport.invalid", "costs must be finite");
        if (cost.cols[e] < 0 || static_cast<std::size_t>(cost.cols[e]) >= cost.image_count) {
            throw Error("transport.invalid", "cost column index out of range");
        }
    }
    PathSolver solver(cost, supplies, capacities);
    return solver.run();
}

// ---------------------------------------------------------------------------
// Zonotopes and box minima

Zonotope make_zonotope(Point2 center, std::span<const Point2> generators) {
    Zonotope z;
    z.center = center;
    std::vector<Point2> gens;
    for (Point2 g : generators) {
        if (g.x == 0.0 && g.y == 0.0) continue;
        if (g.y < 0.0 || (g.y == 0.0 && g.x < 0.0)) g = -1.0 * g;
        gens.push_back(g);
    }
    if (gens.empty()) {
        z.edges.ax = {0.0};
        z.edges.ay = {0.0};
        z.edges.ex = {0.0};
        z.edges.ey = {0.0};
        z.edges.inv_len2 = {0.0};
        z.edges.solid = false;
        return z;
    }
    z.is_point = false;
    std::stable_sort(gens.begin(), gens.end(),
                     [](Point2 a, Point2 b) { return std::atan2(a.y, a.x) < std::atan2(b.y, b.x); });
    std::vector<Point2> merged;
    for (Point2 g : gens) {
        if (!merged.empty() && std::abs(cross(merged.back(), g)) <= 1e-12 * norm(merged.back()) * norm(g)) {
            merged.back() = merged.back() + g;
        } else {
            merged.push_back(g);
        }
    }
    auto add_edge = [&](Point2 a, Point2 e) {
        z.edges.ax.push_back(a.x);
        z.edges.ay.push_back(a.y);
        z.edges.ex.push_back(e.x);
        z.edges.ey.push_back(e.y);
        const double l2 = norm2(e);
        z.edges.inv_len2.push_back(l2 > 0.0 ? 1.0 / l2 : 0.0);
    };
    Point2 sum{};
    for (Point2 g : merged) sum = sum + g;
    if (merged.size() == 1) {
        add_edge(-1.0 * sum, 2.0 * sum);
        z.edges.solid = false;
        return z;
    }
    Point2 v = -1.0 * sum;
    for (Point2 g : merged) {
        add_edge(v, 2.0 * g);
        v = v + 2.0 * g;
    }
    for (Point2 g : merged) {
        add_edge(v, -2.0 * g);
        v = v - 2.0 * g;
    }
    z.edges.solid = true;
    return z;
}

double box_min_quadratic(Point2 x, Point2 y, std::span<const Point2> mode_displacements_at_x, const LambdaBox& box) {
    box.validate();
    if (box.dim() != mode_displacements_at_x.size()) {
        throw Error("modes.length", "box dimension does not match the mode count");
    }
    Point2 c = x;
    std::vector<Point2> gens;
    for (std::size_t k = 0; k < box.dim(); ++k) {
        const double mid = 0.5 * (box.lower[k] + box.upper[k]);
        const Point2 t = mode_displacements_at_x[k];
        if (mid != 0.0) {
            c.x += mid * t.x;
            c.y += mid * t.y;
        }
        gens.push_back(0.5 * (box.upper[k] - box.lower[k]) * t);
    }
    const Zonotope z = make_zonotope(c, gens);
    double d = 0.0;
    simd::kernels().polygon_sqdist(z.edges, z.center.x, z.center.y, &y.x, &y.y, 1, &d);
    return z.is_point ? d : std::max(0.0, d - 1e-9);
}

double box_min_F(const ModeBasis& basis, const LambdaBox& box) {
    box.validate();
    if (box.dim() != basis.size()) throw Error("modes.length", "box dimension does not match the mode count");
    std::vector<double> clamped(box.dim(), 0.0);
    for (std::size_t k = 0; k < box.dim(); ++k) {
        if (basis.is_statistical(k)) clamped[k] = std::clamp(0.0, box.lower[k], box.upper[k]);
    }
    return F_eval(basis, clamped);
}

// ---------------------------------------------------------------------------
// Cost model

CostModel::CostModel(TemplateShape tmpl, ImageDomain image, ModeBasis basis, FeatureCost fcost, double tau,
                     std::vector<double> g_background)
    : tmpl_(std::move(tmpl)), image_(std::move(image)), basis_(std::move(basis)), fcost_(std::move(fcost)),
      tau_(tau), g_(std::move(g_background)) {
    if (!(tau_ >= 0.0) || !std::isfinite(tau_)) throw Error("energy.invalid", "tau must be finite and >= 0");
    tmpl_.validate();
    image_.validate();
    basis_.validate(tmpl_.size());
    fcost_.validate(tmpl_, image_, basis_.size());
    const std::size_t nx = tmpl_.size();
    const std::size_t ny = image_.size();
    if (nx == 0 || ny == 0) throw Error("energy.invalid", "template and image must be non-empty");
    if (!g_.empty() && g_.size() != ny) throw Error("energy.invalid", "background cost needs one value per image point");
    for (double g : g_) {
        if (!std::isfinite(g)) throw Error("energy.invalid", "background cost must be finite");
    }
    if (g_.empty()) g_.assign(ny, 0.0);

    for (const Point2& p : tmpl_.points) {
        tx_.push_back(p.x);
        ty_.push_back(p.y);
    }
    for (const Point2& p : image_.points) {
        yx_.push_back(p.x);
        yy_.push_back(p.y);
    }
    for (const Mode& m : basis_.modes) {
        std::vector<double> dx(nx), dy(nx);
        for (std::size_t i = 0; i < nx; ++i) {
            dx[i] = m.displacements[i].x;
            dy[i] = m.displacements[i].y;
        }
        dx_.push_back(std::move(dx));
        dy_.push_back(std::move(dy));
        magnitude_.push_back(m.max_norm());
    }

    // Non-geometric cost rows, one per distinct template appearance.
    std::vector<double> base(ny);
    label_.assign(nx, 0);
    switch (fcost_.kind) {
        case FeatureCost::Kind::none:
            unary_.assign(ny, 0.0);
            break;
        case FeatureCost::Kind::squared_euclidean: {
            std::map<FeatureVector, std::uint32_t> seen;
            for (std::size_t i = 0; i < nx; ++i) {
                const auto [it, inserted] = seen.emplace(tmpl_.features[i], static_cast<std::uint32_t>(seen.size()));
                label_[i] = it->second;
                if (!inserted) continue;
                fcost_.base_row(tmpl_, image_, i, base);
                for (double v : base) unary_.push_back(tau_ * v);
            }
            break;
        }
        case FeatureCost::Kind::table:
            label_ = fcost_.table.labels;
            for (double v : fcost_.table.values) unary_.push_back(tau_ * v);
            break;
    }
    double lo = kInf, hi = -kInf;
    for (std::size_t r = 0; r < unary_.size() / ny; ++r) {
        for (std::size_t j = 0; j < ny; ++j) {
            double& u = unary_[r * ny + j];
            u = u + g_[j];
            lo = std::min(lo, u);
            hi = std::max(hi, u);
        }
    }
    unary_span_ = hi - lo;
    for (std::size_t r = 0; r < unary_.size() / ny; ++r) {
        const auto [mn, mx] = std::minmax_element(unary_.begin() + static_cast<std::ptrdiff_t>(r * ny),
                                                  unary_.begin() + static_cast<std::ptrdiff_t>((r + 1) * ny));
        label_min_.push_back(*mn);
        label_max_.push_back(*mx);
    }
    image_spacing_ = std::sqrt(image_.total_capacity() / static_cast<double>(ny));

    // Bucket grid over the image points, rows of buckets stored contiguously.
    bbox_lo_ = bbox_hi_ = image_.points[0];
    for (const Point2& p : image_.points) {
        bbox_lo_ = {std::min(bbox_lo_.x, p.x), std::min(bbox_lo_.y, p.y)};
        bbox_hi_ = {std::max(bbox_hi_.x, p.x), std::max(bbox_hi_.y, p.y)};
    }
    const double span = std::max(bbox_hi_.x - bbox_lo_.x, bbox_hi_.y - bbox_lo_.y);
    bucket_size_ = std::max({2.0 * image_spacing_, span / 256.0, 1e-9});
    bucket_nx_ = static_cast<std::size_t>((bbox_hi_.x - bbox_lo_.x) / bucket_size_) + 1;
    bucket_ny_ = static_cast<std::size_t>((bbox_hi_.y - bbox_lo_.y) / bucket_size_) + 1;
    std::vector<std::size_t> bucket_of(ny);
    bucket_start_.assign(bucket_nx_ * bucket_ny_ + 1, 0);
    for (std::size_t j = 0; j < ny; ++j) {
        const Point2 p = image_.points[j];
        const auto cx = std::min(bucket_nx_ - 1, static_cast<std::size_t>((p.x - bbox_lo_.x) / bucket_size_));
        const auto cy = std::min(bucket_ny_ - 1, static_cast<std::size_t>((p.y - bbox_lo_.y) / bucket_size_));
        bucket_of[j] = cy * bucket_nx_ + cx;
        ++bucket_start_[bucket_of[j] + 1];
    }
    for (std::size_t b = 0; b + 1 < bucket_start_.size(); ++b) bucket_start_[b + 1] += bucket_start_[b];
    std::vector<std::size_t> fill(bucket_start_.begin(), bucket_start_.end() - 1);
    bucket_items_.resize(ny);
    bucket_x_.resize(ny);
    bucket_y_.resize(ny);
    for (std::size_t j = 0; j < ny; ++j) {
        const std::size_t at = fill[bucket_of[j]]++;
        bucket_items_[at] = static_cast<std::uint32_t>(j);
        bucket_x_[at] = image_.points[j].x;
        bucket_y_[at] = image_.points[j].y;
    }
}

void CostModel::check_lambda(std::size_t size) const {
    if (size != basis_.size()) throw Error("modes.length", "lambda length does not match the mode count");
}

void CostModel::moved_points(std::span<const double> lambda, std::vector<double>& xs, std::vector<double>& ys) const {
    check_lambda(lambda.size());
    xs = tx_;
    ys = ty_;
    const auto& k = simd::kernels();
    for (std::size_t m = 0; m < lambda.size(); ++m) {
        if (lambda[m] == 0.0) continue;
        k.axpy(lambda[m], dx_[m].data(), xs.data(), xs.size());
        k.axpy(lambda[m], dy_[m].data(), ys.data(), ys.size());
    }
}

double CostModel::feature_term(std::size_t i, std::size_t j, std::span<const double> lambda) const {
    double v = unary_row(i)[j];
    if (fcost_.has_corrections()) {
        check_lambda(lambda.size());
        for (std::size_t k = 0; k < lambda.size(); ++k) {
            if (lambda[k] == 0.0) continue;
            v = v + (tau_ * lambda[k]) * fcost_.corrections[k].at(i, j);
        }
    }
    return v;
}

double CostModel::pair_cost(std::size_t i, std::size_t j, std::span<const double> lambda) const {
    check_lambda(lambda.size());
    double px = tx_[i], py = ty_[i];
    for (std::size_t k = 0; k < lambda.size(); ++k) {
        if (lambda[k] == 0.0) continue;
        px = px + lambda[k] * dx_[k][i];
        py = py + lambda[k] * dy_[k][i];
    }
    const double dx = yx_[j] - px;
    const double dy = yy_[j] - py;
    return dx * dx + dy * dy + feature_term(i, j, lambda);
}

void CostModel::add_corrections(std::size_t i, std::span<const double> lambda, std::span<double> row) const {
    if (!fcost_.has_corrections()) return;
    const auto& k = simd::kernels();
    for (std::size_t m = 0; m < lambda.size(); ++m) {
        if (lambda[m] == 0.0) continue;
        k.axpy(tau_ * lambda[m], fcost_.corrections[m].row(i).data(), row.data(), row.size());
    }
}

void CostModel::add_box_corrections(std::size_t i, const LambdaBox& box, std::span<double> row) const {
    if (!fcost_.has_corrections()) return;
    for (std::size_t m = 0; m < box.dim(); ++m) {
        const double al = tau_ * box.lower[m];
        const double au = tau_ * box.upper[m];
        if (al == 0.0 && au == 0.0) continue;
        const auto corr = fcost_.corrections[m].row(i);
        for (std::size_t j = 0; j < row.size(); ++j) row[j] = row[j] + std::min(al * corr[j], au * corr[j]);
    }
}

Zonotope CostModel::zonotope(std::size_t i, const LambdaBox& box) const {
    Point2 c{tx_[i], ty_[i]};
    std::vector<Point2> gens(box.dim());
    for (std::size_t k = 0; k < box.dim(); ++k) {
        const double mid = 0.5 * (box.lower[k] + box.upper[k]);
        if (mid != 0.0) {
            c.x = c.x + mid * dx_[k][i];
            c.y = c.y + mid * dy_[k][i];
        }
        const double half = 0.5 * (box.upper[k] - box.lower[k]);
        gens[k] = {half * dx_[k][i], half * dy_[k][i]};
    }
    return make_zonotope(c, gens);
}

void CostModel::box_sqdist(std::size_t i, const LambdaBox& box, std::span<double> out) const {
    const Zonotope z = zonotope(i, box);
    const auto& k = simd::kernels();
    if (z.is_point) {
        k.sqdist(z.center.x, z.center.y, yx_.data(), yy_.data(), out.size(), out.data());
        return;
    }
    k.polygon_sqdist(z.edges, z.center.x, z.center.y, yx_.data(), yy_.data(), out.size(), out.data());
    for (double& d : out) d = std::max(0.0, d - 1e-9);
}

double CostModel::box_candidates(std::size_t i, const LambdaBox& box, double radius, RowCandidates& out) const {
    const Zonotope z = zonotope(i, box);
    const auto& k = simd::kernels();
    double lox = 0.0, hix = 0.0, loy = 0.0, hiy = 0.0;
    for (std::size_t e = 0; e < z.edges.ax.size(); ++e) {
        for (double t : {0.0, 1.0}) {
            lox = std::min(lox, z.edges.ax[e] + t * z.edges.ex[e]);
            hix = std::max(hix, z.edges.ax[e] + t * z.edges.ex[e]);
            loy = std::min(loy, z.edges.ay[e] + t * z.edges.ey[e]);
            hiy = std::max(hiy, z.edges.ay[e] + t * z.edges.ey[e]);
        }
    }
    double far = 0.0;
    for (double cx : {bbox_lo_.x, bbox_hi_.x}) {
        for (double cy : {bbox_lo_.y, bbox_hi_.y}) {
            far = std::max(far, norm2(Point2{cx, cy} - z.center));
        }
    }
    const auto cell = [&](double v, double origin, std::size_t count) {
        const double c = std::floor((v - origin) / bucket_size_);
        return static_cast<std::size_t>(std::clamp(c, 0.0, static_cast<double>(count - 1)));
    };
    const std::size_t c0 = cell(z.center.x + lox - radius, bbox_lo_.x, bucket_nx_);
    const std::size_t c1 = cell(z.center.x + hix + radius, bbox_lo_.x, bucket_nx_);
    const std::size_t r0 = cell(z.center.y + loy - radius, bbox_lo_.y, bucket_ny_);
    const std::size_t r1 = cell(z.center.y + hiy + radius, bbox_lo_.y, bucket_ny_);
    const double r2 = radius * radius;
    std::vector<std::pair<std::uint32_t, double>> hits;
    double buf[256];
    for (std::size_t r = r0; r <= r1; ++r) {
        std::size_t a = bucket_start_[r * bucket_nx_ + c0];
        const std::size_t b = bucket_start_[r * bucket_nx_ + c1 + 1];
        while (a < b) {
            const std::size_t len = std::min<std::size_t>(256, b - a);
            if (z.is_point) {
                k.sqdist(z.center.x, z.center.y, bucket_x_.data() + a, bucket_y_.data() + a, len, buf);
            } else {
                k.polygon_sqdist(z.edges, z.center.x, z.center.y, bucket_x_.data() + a, bucket_y_.data() + a, len, buf);
            }
            for (std::size_t q = 0; q < len; ++q) {
                const double d = z.is_point ? buf[q] : std::max(0.0, buf[q] - 1e-9);
                if (d <= r2) hits.emplace_back(bucket_items_[a + q], d);
            }
            a += len;
        }
    }
    std::sort(hits.begin(), hits.end());
    out.index.clear();
    out.geo.clear();
    for (const auto& [j, d] : hits) {
        out.index.push_back(j);
        out.geo.push_back(d);
    }
    return std::sqrt(far);
}

const double* CostModel::row_features(std::size_t i, std::span<const double> lambda, const LambdaBox* box,
                                      std::vector<double>& buffer, double& fmin, double& fmax) const {
    if (!fcost_.has_corrections()) {
        fmin = label_min_[label_[i]];
        fmax = label_max_[label_[i]];
        return unary_row(i);
    }
    const std::size_t ny = image_.size();
    buffer.assign(unary_row(i), unary_row(i) + ny);
    if (box != nullptr) {
        add_box_corrections(i, *box, buffer);
    } else {
        add_corrections(i, lambda, buffer);
    }
    const auto [lo, hi] = std::minmax_element(buffer.begin(), buffer.end());
    fmin = *lo;
    fmax = *hi;
    return buffer.data();
}

namespace {

// Appends the retained entries of one row and records its overflow cost. The
// candidates are the in-radius points (ascending index); the others cost at
// least r^2 + fmin, so the row cap only needs the in-radius order statistics.
void push_row(SparseCost& c, std::size_t i, const RowCandidates& cand, const double* feat, double fmin, double fmax,
              double extent, std::vector<double>& scratch) {
    if (cand.index.empty()) {
        throw Error("transport.radius", "no image point within radius " + std::to_string(c.radius) +
                                            " of template point " + std::to_string(i) + "; enlarge the radius");
    }
    const double r2 = c.radius * c.radius;
    scratch.resize(cand.index.size());
    for (std::size_t q = 0; q < cand.index.size(); ++q) scratch[q] = cand.geo[q] + feat[cand.index[q]];
    double limit = r2 + fmin;
    const bool capped = c.max_entries > 0 && c.max_entries < c.image_count;
    if (capped && scratch.size() > c.max_entries) {
        std::vector<double> order(scratch);
        std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(c.max_entries), order.end());
        limit = std::min(limit, order[c.max_entries]);
    }
    for (std::size_t q = 0; q < cand.index.size(); ++q) {
        if (!capped || scratch[q] < limit) {
            c.cols.push_back(static_cast<std::int32_t>(cand.index[q]));
            c.values.push_back(scratch[q]);
        }
    }
    c.row_start.push_back(c.cols.size());
    c.overflow[i] = limit;
    c.extent = std::max(c.extent, extent);
    c.feature_span = std::max(c.feature_span, fmax - fmin);
}

SparseCost empty_cost(std::size_t nx, std::size_t ny, double radius, std::size_t max_entries) {
    if (!(radius > 0.0)) throw Error("transport.radius", "truncation radius must be > 0");
    SparseCost c;
    c.template_count = nx;
    c.image_count = ny;
    c.radius = radius;
    c.max_entries = max_entries;
    c.row_start.reserve(nx + 1);
    c.row_start.push_back(0);
    c.overflow.assign(nx, kInf);
    return c;
}

} // namespace

SparseCost CostModel::assemble(std::span<const double> lambda, double radius, std::size_t max_entries) const {
    const std::size_t nx = tmpl_.size();
    const std::size_t ny = image_.size();
    SparseCost c = empty_cost(nx, ny, radius, max_entries);
    std::vector<double> xs, ys;
    moved_points(lambda, xs, ys);
    std::vector<double> geo(ny), buffer, scratch;
    RowCandidates cand;
    const double r2 = radius * radius;
    const auto& k = simd::kernels();
    for (std::size_t i = 0; i < nx; ++i) {
        k.sqdist(xs[i], ys[i], yx_.data(), yy_.data(), ny, geo.data());
        cand.index.clear();
        cand.geo.clear();
        double gmax = 0.0;
        for (std::size_t j = 0; j < ny; ++j) {
            gmax = std::max(gmax, geo[j]);
            if (geo[j] <= r2) {
                cand.index.push_back(static_cast<std::uint32_t>(j));
                cand.geo.push_back(geo[j]);
            }
        }
        double fmin = 0.0, fmax = 0.0;
        const double* feat = row_features(i, lambda, nullptr, buffer, fmin, fmax);
        push_row(c, i, cand, feat, fmin, fmax, std::sqrt(gmax), scratch);
    }
    return c;
}

SparseCost CostModel::assemble_bound(const LambdaBox& box, double radius, std::size_t max_entries) const {
    box.validate();
    check_lambda(box.dim());
    const std::size_t nx = tmpl_.size();
    const std::size_t ny = image_.size();
    SparseCost c = empty_cost(nx, ny, radius, max_entries);
    std::vector<double> buffer, scratch;
    RowCandidates cand;
    for (std::size_t i = 0; i < nx; ++i) {
        const double extent = box_candidates(i, box, radius, cand);
        double fmin = 0.0, fmax = 0.0;
        const double* feat = row_features(i, {}, &box, buffer, fmin, fmax);
        push_row(c, i, cand, feat, fmin, fmax, extent, scratch);
    }
    return c;
}

double CostModel::default_radius() const { return 3.0 * image_spacing_ + std::sqrt(std::max(unary_span_, 0.0)); }

NearestMatch CostModel::nearest(std::span<const double> lambda) const {
    const std::size_t ny = image_.size();
    NearestMatch out;
    out.cost.assign(ny, kInf);
    out.source.assign(ny, -1);
    std::vector<double> xs, ys, feat(ny);
    moved_points(lambda, xs, ys);
    const auto& k = simd::kernels();
    for (std::size_t i = 0; i < tmpl_.size(); ++i) {
        const double* extra = unary_row(i);
        if (fcost_.has_corrections()) {
            std::copy_n(unary_row(i), ny, feat.begin());
            add_corrections(i, lambda, feat);
            extra = feat.data();
        }
        k.sqdist_min(xs[i], ys[i], yx_.data(), yy_.data(), extra, ny, out.cost.data(), out.source.data(),
                     static_cast<std::int32_t>(i));
    }
    return out;
}

std::vector<double> CostModel::nearest_bound(const LambdaBox& box) const {
    box.validate();
    check_lambda(box.dim());
    const std::size_t ny = image_.size();
    std::vector<double> best(ny, kInf), geo(ny), feat(ny);
    for (std::size_t i = 0; i < tmpl_.size(); ++i) {
        box_sqdist(i, box, geo);
        std::copy_n(unary_row(i), ny, feat.begin());
        add_box_corrections(i, box, feat);
        for (std::size_t j = 0; j < ny; ++j) best[j] = std::min(best[j], geo[j] + feat[j]);
    }
    return best;
}

SparseCost assemble_cost(const TemplateShape& tmpl, const ImageDomain& image, const ModeBasis& basis,
                         std::span<const double> lambda, const FeatureCost& fcost,
                         std::span<const double> g_background, double radius, double tau) {
    const CostModel model(tmpl, image, basis, fcost, tau, {g_background.begin(), g_background.end()});
    return model.assemble(lambda, radius);
}

SparseCost assemble_bound_cost(const TemplateShape& tmpl, const ImageDomain& image, const ModeBasis& basis,
                               const LambdaBox& box, const FeatureCost& fcost, std::span<const double> g_background,
                               double radius, double tau) {
    const CostModel model(tmpl, image, basis, fcost, tau, {g_background.begin(), g_background.end()});
    return model.assemble_bound(box, radius);
}

} // namespace wmseg
