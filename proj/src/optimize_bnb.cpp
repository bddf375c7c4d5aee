#include "wmseg/optimize_bnb.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include <json.hpp>

#include "wmseg/error.hpp"

namespace wmseg {

namespace {

bool heap_less(const CoverBox& a, const CoverBox& b) {
    // std heap is a max-heap: "less" means lower priority.
    if (*a.box.bound != *b.box.bound) return *a.box.bound > *b.box.bound;
    return a.id > b.id;
}

void write(std::ostream* out, const nlohmann::json& j) {
    if (out) *out << j.dump() << '\n';
}

nlohmann::json box_json(const CoverBox& b, const Problem& p, const char* status) {
    return {{"type", "box"},      {"id", b.id},          {"parent", b.parent},
            {"depth", b.depth},   {"lower", b.box.lower}, {"upper", b.box.upper},
            {"bound", *b.box.bound}, {"width_px", displacement_width(b.box, p)}, {"status", status}};
}

void evaluate_bounds(std::vector<CoverBox>& boxes, const Problem& problem, bool parallel) {
    const std::size_t n = boxes.size();
    std::size_t threads = parallel ? std::min<std::size_t>(std::thread::hardware_concurrency(), n) : 1;
    if (threads <= 1) {
        for (CoverBox& b : boxes) b.box.bound = E2(b.box, problem);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t k = t; k < n; k += threads) boxes[k].box.bound = E2(boxes[k].box, problem);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

void check_region(const LambdaBox& region, const Problem& problem) {
    region.validate();
    if (region.dim() != problem.mode_count()) throw Error("modes.length", "region dimension does not match the mode count");
    if (const auto s = problem.scale_index(); s && !(region.lower[*s] > -1.0)) {
        throw Error("energy.invalid_scale", "scale coefficient range must stay above -1");
    }
}

} // namespace

void CoverList::push(CoverBox b) {
    if (!b.box.bound) throw Error("bnb.invalid", "cover boxes need an evaluated bound");
    max_depth = std::max(max_depth, b.depth);
    heap_.push_back(std::move(b));
    std::push_heap(heap_.begin(), heap_.end(), heap_less);
}

CoverBox CoverList::pop() {
    std::pop_heap(heap_.begin(), heap_.end(), heap_less);
    CoverBox b = std::move(heap_.back());
    heap_.pop_back();
    return b;
}

double CoverList::min_bound() const {
    return heap_.empty() ? std::numeric_limits<double>::infinity() : *heap_.front().box.bound;
}

bool CoverList::offer(std::span<const double> lambda, double value, Coupling plan) {
    if (has_incumbent_ && !(value < best_value_)) return false;
    has_incumbent_ = true;
    best_lambda_.assign(lambda.begin(), lambda.end());
    best_value_ = value;
    best_plan_ = std::move(plan);
    return true;
}

double displacement_width(const LambdaBox& box, const Problem& problem) {
    double w = 0.0;
    for (std::size_t k = 0; k < box.dim(); ++k) w += (box.upper[k] - box.lower[k]) * problem.model().mode_magnitude(k);
    return w;
}

CoverList init_cover(const LambdaBox& region, std::span<const std::size_t> grid, const Problem& problem,
                     const BnbOptions& options) {
    check_region(region, problem);
    const std::size_t n = region.dim();
    if (!grid.empty() && grid.size() != n) throw Error("bnb.invalid", "grid needs one count per axis");
    std::vector<std::size_t> counts(n, 1);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        if (grid[k] < 1) throw Error("bnb.invalid", "grid counts must be >= 1");
        counts[k] = region.upper[k] > region.lower[k] ? grid[k] : 1;
    }
    CoverList cover;
    std::size_t active = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if ((region.upper[k] - region.lower[k]) * problem.model().mode_magnitude(k) > 0.0) ++active;
    }
    cover.axis_tolerance.assign(n, std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < n; ++k) {
        const double mag = problem.model().mode_magnitude(k);
        if (mag > 0.0 && active > 0) cover.axis_tolerance[k] = options.stop_px / static_cast<double>(active) / mag;
    }

    std::vector<CoverBox> cells;
    std::vector<std::size_t> idx(n, 0);
    while (true) {
        CoverBox c;
        c.box.lower.resize(n);
        c.box.upper.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            const double w = (region.upper[k] - region.lower[k]) / static_cast<double>(counts[k]);
            c.box.lower[k] = idx[k] == 0 ? region.lower[k] : region.lower[k] + w * static_cast<double>(idx[k]);
            c.box.upper[k] = idx[k] + 1 == counts[k] ? region.upper[k]
                                                      : region.lower[k] + w * static_cast<double>(idx[k] + 1);
        }
        c.id = cover.next_id();
        cells.push_back(std::move(c));
        std::size_t k = 0;
        while (k < n && ++idx[k] == counts[k]) idx[k++] = 0;
        if (k == n) break;
    }
    evaluate_bounds(cells, problem, options.parallel);
    cover.bounds_evaluated += cells.size();
    for (CoverBox& c : cells) {
        write(options.report, box_json(c, problem, "open"));
        cover.push(std::move(c));
    }
    return cover;
}

bool refine(CoverList& cover, const Problem& problem, const BnbOptions& options) {
    if (cover.empty()) throw Error("bnb.invalid", "cannot refine an empty cover");
    CoverBox parent = cover.pop();
    const std::vector<double> center = parent.box.center();
    TransportEnergy at_center = E1(center, problem);
    write(options.report, {{"type", "center"}, {"id", parent.id}, {"lambda", center}, {"value", at_center.value}});
    if (cover.offer(center, at_center.value, std::move(at_center.plan))) {
        write(options.report, {{"type", "incumbent"}, {"lambda", center}, {"value", cover.best_value()}});
    }

    const std::size_t n = parent.box.dim();
    std::vector<std::size_t> axes;
    for (std::size_t k = 0; k < n; ++k) {
        if (parent.box.upper[k] - parent.box.lower[k] > cover.axis_tolerance[k]) axes.push_back(k);
    }
    if (axes.empty()) {
        cover.push(std::move(parent));
        return false;
    }
    if (options.bisect_longest) {
        const auto widest = std::max_element(axes.begin(), axes.end(), [&](std::size_t a, std::size_t b) {
            return (parent.box.upper[a] - parent.box.lower[a]) * problem.model().mode_magnitude(a) <
                   (parent.box.upper[b] - parent.box.lower[b]) * problem.model().mode_magnitude(b);
        });
        axes = {*widest};
    }
    std::vector<CoverBox> children;
    for (std::size_t mask = 0; mask < (std::size_t{1} << axes.size()); ++mask) {
        CoverBox c;
        c.box.lower = parent.box.lower;
        c.box.upper = parent.box.upper;
        for (std::size_t a = 0; a < axes.size(); ++a) {
            const std::size_t k = axes[a];
            if (mask & (std::size_t{1} << a)) {
                c.box.lower[k] = center[k];
            } else {
                c.box.upper[k] = center[k];
            }
        }
        c.id = cover.next_id();
        c.parent = parent.id;
        c.depth = parent.depth + 1;
        children.push_back(std::move(c));
    }
    evaluate_bounds(children, problem, options.parallel);
    cover.bounds_evaluated += children.size();
    for (CoverBox& c : children) {
        const bool pruned = options.prune && cover.has_incumbent() && *c.box.bound > cover.best_value();
        write(options.report, box_json(c, problem, pruned ? "pruned" : "open"));
        if (!pruned) cover.push(std::move(c));
    }
    return true;
}

BnbResult bnb_optimize(const LambdaBox& region, const Problem& problem, const BnbOptions& options) {
    if (!(options.stop_px > 0.0)) throw Error("bnb.invalid", "stop displacement must be > 0");
    const std::vector<std::size_t> grid = options.grid;
    CoverList cover = init_cover(region, grid, problem, options);
    BnbResult res;
    double lower = -std::numeric_limits<double>::infinity();
    const char* status = "converged";
    while (true) {
        if (cover.empty()) {
            lower = cover.best_value();
            break;
        }
        const CoverBox& top = cover.top();
        if (cover.has_incumbent() && *top.box.bound >= cover.best_value()) {
            lower = cover.best_value();
            break;
        }
        if (displacement_width(top.box, problem) <= options.stop_px) {
            lower = *top.box.bound;
            const std::vector<double> c = top.box.center();
            TransportEnergy e = E1(c, problem);
            write(options.report, {{"type", "center"}, {"id", top.id}, {"lambda", c}, {"value", e.value}});
            cover.offer(c, e.value, std::move(e.plan));
            break;
        }
        if (cover.bounds_evaluated >= options.budget) {
            lower = *top.box.bound;
            res.budget_exhausted = true;
            status = "budget-exhausted";
            break;
        }
        if (!refine(cover, problem, options)) {
            // Unsplittable box above the stopping width: only zero-magnitude axes remain.
            lower = *cover.top().box.bound;
            break;
        }
    }
    if (!cover.has_incumbent()) {
        const std::vector<double> c = region.center();
        TransportEnergy e = E1(c, problem);
        cover.offer(c, e.value, std::move(e.plan));
    }
    res.lambda = cover.best_lambda();
    res.value = cover.best_value();
    res.plan = cover.best_plan();
    res.lower_bound = std::min(lower, res.value);
    res.gap = res.value - res.lower_bound;
    res.bounds_evaluated = cover.bounds_evaluated;
    res.max_depth = cover.max_depth;
    res.open_boxes = cover.size();
    write(options.report, {{"type", "result"},
                           {"status", status},
                           {"lambda", res.lambda},
                           {"value", res.value},
                           {"lower_bound", res.lower_bound},
                           {"gap", res.gap},
                           {"bounds_evaluated", res.bounds_evaluated},
                           {"max_depth", res.max_depth}});
    return res;
}

CombinedResult combined_optimize(const LambdaBox& region, const Problem& problem, const std::vector<bool>& bnb_modes,
                                 const BnbOptions& bnb_options, const AltOptions& alt_options) {
    const std::size_t n = problem.mode_count();
    if (bnb_modes.size() != n) throw Error("modes.length", "bnb mode mask needs one flag per mode");
    LambdaBox sub = region;
    for (std::size_t k = 0; k < n; ++k) {
        if (!bnb_modes[k]) sub.lower[k] = sub.upper[k] = 0.0;
    }
    CombinedResult out;
    if (problem.config().sigma_tv > 0.0) {
        out.bnb = bnb_optimize(sub, problem.with_sigma_tv(0.0), bnb_options);
    } else {
        out.bnb = bnb_optimize(sub, problem, bnb_options);
    }
    out.alt = alternating_optimize(out.bnb.lambda, problem, alt_options);
    out.lambda = out.alt.lambda;
    out.energy = out.alt.energy;
    out.segmentation = out.alt.segmentation;
    return out;
}

} // namespace wmseg
