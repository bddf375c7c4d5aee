#include "wmseg/optimize_alt.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <algorithm>
#include <functional>
#include <limits>
#include <queue>
#include <tuple>

#include "wmseg/error.hpp"

namespace wmseg {

std::string_view to_string(Backend b) { return b == Backend::graphcut ? "graphcut" : "transport"; }

Backend backend_from_string(std::string_view s) {
    if (s == "transport") return Backend::transport;
    if (s == "graphcut") return Backend::graphcut;
    throw Error("config.invalid", "unknown backend '" + std::string(s) + "'");
}

std::vector<double> lambda_step(const Coupling& pi, std::span<const double> lambda, const Problem& problem,
                                const std::vector<bool>& frozen) {
    const std::size_t n = problem.mode_count();
    if (lambda.size() != n) throw Error("modes.length", "lambda length does not match the mode count");
    if (!frozen.empty() && frozen.size() != n) throw Error("modes.length", "frozen mask length mismatch");
    const ModeBasis& basis = problem.basis();
    const CostModel& model = problem.model();
    const auto scale = problem.scale_index();

    std::vector<double> out(lambda.begin(), lambda.end());
    std::vector<std::size_t> free;
    for (std::size_t k = 0; k < n; ++k) {
        if ((!frozen.empty() && frozen[k]) || (scale && *scale == k)) continue;
        if (basis.is_statistical(k) && basis.sigma[k] == 0.0) {
            out[k] = 0.0;  // zero-variance directions carry infinite prior cost
            continue;
        }
        free.push_back(k);
    }
    if (free.empty()) return out;

    const auto m = static_cast<Eigen::Index>(free.size());
    const double kappa = 1.0 / problem.mass_factor(lambda);
    const double tau = model.tau();
    const auto& fc = model.fcost();
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
    Eigen::MatrixXd a(2, m);
    const auto& tmpl = problem.tmpl();
    const auto& image = problem.image();
    for (const CouplingEntry& e : pi.entries) {
        if (e.j == kOverflow) continue;
        if (e.i >= tmpl.size() || static_cast<std::size_t>(e.j) >= image.size()) {
            throw Error("coupling.range", "coupling index out of range");
        }
        const auto j = static_cast<std::size_t>(e.j);
        // Residual with the fixed coefficients applied.
        Point2 r = tmpl.points[e.i];
        for (std::size_t k = 0; k < n; ++k) {
            if (out[k] == 0.0 || std::find(free.begin(), free.end(), k) != free.end()) continue;
            r = r + out[k] * basis.modes[k].displacements[e.i];
        }
        r = r - image.points[j];
        for (Eigen::Index c = 0; c < m; ++c) {
            const Point2 t = basis.modes[free[static_cast<std::size_t>(c)]].displacements[e.i];
            a(0, c) = t.x;
            a(1, c) = t.y;
        }
        h.noalias() += kappa * e.mass * a.transpose() * a;
        Eigen::Vector2d rv(r.x, r.y);
        b.noalias() -= kappa * e.mass * a.transpose() * rv;
        if (fc.has_corrections()) {
            for (Eigen::Index c = 0; c < m; ++c) {
                b(c) -= 0.5 * kappa * e.mass * tau * fc.corrections[free[static_cast<std::size_t>(c)]].at(e.i, j);
            }
        }
    }
    for (Eigen::Index c = 0; c < m; ++c) {
        const std::size_t k = free[static_cast<std::size_t>(c)];
        if (basis.is_statistical(k)) h(c, c) += basis.gamma / (basis.sigma[k] * basis.sigma[k]);
    }
    const Eigen::VectorXd sol = h.completeOrthogonalDecomposition().solve(b);
    for (Eigen::Index c = 0; c < m; ++c) out[free[static_cast<std::size_t>(c)]] = sol(c);
    return out;
}

namespace {

struct PlanStep {
    std::vector<double> lambda;
    double energy = 0.0;
    Coupling plan;
    Segmentation segmentation;
};

PlanStep plan_at(std::span<const double> lambda, const Problem& problem, Backend backend) {
    PlanStep s;
    s.lambda.assign(lambda.begin(), lambda.end());
    if (backend == Backend::transport) {
        TransportEnergy e = E1(lambda, problem);
        s.energy = e.value;
        s.plan = std::move(e.plan);
        s.segmentation = project_to_segmentation(s.plan, problem.image());
    } else {
        RelaxedEnergy e = Er1(lambda, problem);
        s.energy = e.value;
        s.plan = std::move(e.plan);
        s.segmentation = std::move(e.segmentation);
    }
    return s;
}

// Plan step with the scale coefficient chosen by interval branch-and-bound; the
// current scale value is the initial incumbent so the energy cannot increase.
PlanStep plan_with_scale(std::span<const double> lambda, const Problem& problem, const AltOptions& opt,
                         std::size_t s) {
    PlanStep best = plan_at(lambda, problem, opt.backend);
    if (!(opt.scale_lower > -1.0) || !(opt.scale_upper >= opt.scale_lower)) {
        throw Error("config.invalid", "scale interval must satisfy -1 < lower <= upper");
    }
    LambdaBox root = LambdaBox::point(lambda);
    root.lower[s] = opt.scale_lower;
    root.upper[s] = opt.scale_upper;
    auto bound = [&](const LambdaBox& b) {
        return opt.backend == Backend::transport ? E2(b, problem) : Er1_bound(b, problem);
    };
    using Item = std::tuple<double, std::size_t, LambdaBox>;
    auto cmp = [](const Item& a, const Item& b) {
        return std::get<0>(a) != std::get<0>(b) ? std::get<0>(a) > std::get<0>(b) : std::get<1>(a) > std::get<1>(b);
    };
    std::priority_queue<Item, std::vector<Item>, decltype(cmp)> queue(cmp);
    std::size_t created = 0;
    queue.push({bound(root), created++, root});
    while (!queue.empty()) {
        auto [b, id, box] = queue.top();
        queue.pop();
        (void)id;
        if (b >= best.energy) break;
        std::vector<double> c(lambda.begin(), lambda.end());
        c[s] = 0.5 * (box.lower[s] + box.upper[s]);
        PlanStep cand = plan_at(c, problem, opt.backend);
        if (cand.energy < best.energy) best = std::move(cand);
        if (box.upper[s] - box.lower[s] <= opt.scale_width) continue;
        for (int half = 0; half < 2; ++half) {
            LambdaBox child = box;
            if (half == 0) {
                child.upper[s] = c[s];
            } else {
                child.lower[s] = c[s];
            }
            const double cb = bound(child);
            if (cb < best.energy) queue.push({cb, created++, std::move(child)});
        }
    }
    return best;
}

} // namespace

AltResult alternating_optimize(std::span<const double> initial_lambda, const Problem& problem,
                               const AltOptions& options) {
    const std::size_t n = problem.mode_count();
    if (initial_lambda.size() != n) throw Error("modes.length", "initial lambda length does not match the mode count");
    if (!options.frozen.empty() && options.frozen.size() != n) {
        throw Error("modes.length", "frozen mask length mismatch");
    }
    if (options.backend == Backend::transport && problem.config().sigma_tv > 0.0) {
        throw Error("config.backend", "sigma_tv > 0 requires the graph-cut backend");
    }
    problem.mass_factor(initial_lambda);

    const auto scale = problem.scale_index();
    const bool search_scale = scale && (options.frozen.empty() || !options.frozen[*scale]);
    auto plan_step = [&](std::span<const double> l) {
        return search_scale ? plan_with_scale(l, problem, options, *scale) : plan_at(l, problem, options.backend);
    };

    AltResult res;
    PlanStep cur = plan_step(initial_lambda);
    res.trace.push_back({0, "pi", cur.lambda, cur.energy, options.backend});
    for (std::size_t it = 1; it <= options.max_iters; ++it) {
        res.iterations = it;
        std::vector<double> next = lambda_step(cur.plan, cur.lambda, problem, options.frozen);
        double e_lambda = energy_Ehat(next, cur.plan, problem);
        const double e_keep = energy_Ehat(cur.lambda, cur.plan, problem);
        if (!(e_lambda <= e_keep)) {
            next = cur.lambda;  // rounding-level regressions are rejected
            e_lambda = e_keep;
        }
        res.trace.push_back({it, "lambda", next, e_lambda, options.backend});
        PlanStep step = plan_step(next);
        res.trace.push_back({it, "pi", step.lambda, step.energy, options.backend});
        const double decrease = cur.energy - step.energy;
        cur = std::move(step);
        if (decrease < options.tol) {
            res.converged = true;
            break;
        }
    }
    res.lambda = cur.lambda;
    res.energy = cur.energy;
    res.plan = std::move(cur.plan);
    res.segmentation = std::move(cur.segmentation);
    return res;
}

} // namespace wmseg
