#include "wmseg/energy.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "wmseg/error.hpp"

namespace wmseg {

void EnergyConfig::validate() const {
    if (!(tau >= 0.0) || !std::isfinite(tau)) throw Error("energy.invalid", "tau must be finite and >= 0");
    if (!(sigma_tv >= 0.0) || !std::isfinite(sigma_tv)) {
        throw Error("energy.invalid", "sigma_tv must be finite and >= 0");
    }
    if (gamma && (!(*gamma >= 0.0) || !std::isfinite(*gamma))) {
        throw Error("energy.invalid", "gamma must be finite and >= 0");
    }
    if (radius && !(*radius > 0.0)) throw Error("energy.invalid", "radius must be > 0");
}

namespace {

ModeBasis with_gamma(ModeBasis basis, const EnergyConfig& config) {
    if (config.gamma) basis.gamma = *config.gamma;
    return basis;
}

} // namespace

Problem::Problem(TemplateShape tmpl, ImageDomain image, ModeBasis basis, FeatureCost fcost, EnergyConfig config)
    : model_(std::move(tmpl), std::move(image), with_gamma(std::move(basis), config), std::move(fcost), config.tau,
             config.g_background),
      config_(std::move(config)) {
    config_.validate();
    if (config_.scale_enabled) scale_index_ = model_.basis().scale_index();
}

double Problem::mass_factor(std::span<const double> lambda) const {
    if (!scale_index_) return 1.0;
    return 1.0 / scale_density_factor(lambda[*scale_index_]);
}

double Problem::tv_factor(std::span<const double> lambda) const {
    if (!scale_index_ || !config_.rescale_tv_with_scale) return 1.0;
    const double s = lambda[*scale_index_];
    if (!(s > -1.0)) throw Error("energy.invalid_scale", "scale coefficient must be > -1");
    return 1.0 / (1.0 + s);
}

Problem Problem::with_sigma_tv(double sigma_tv) const {
    Problem copy = *this;
    copy.config_.sigma_tv = sigma_tv;
    copy.config_.validate();
    return copy;
}

double Problem::initial_radius() const { return config_.radius ? *config_.radius : model_.default_radius(); }

double tv_G(std::span<const double> u, std::span<const Edge> adjacency) {
    double g = 0.0;
    for (const Edge& e : adjacency) {
        if (e.a >= u.size() || e.b >= u.size()) throw Error("adjacency.invalid", "edge endpoint out of range");
        g += e.weight * std::abs(u[e.a] - u[e.b]);
    }
    return g;
}

double tv_G(const Segmentation& seg, const ImageDomain& domain) {
    return tv_G(seg.indicator(domain), domain.adjacency);
}

namespace {

void check_lambda(std::span<const double> lambda, const Problem& p) {
    if (lambda.size() != p.mode_count()) throw Error("modes.length", "lambda length does not match the mode count");
    for (double l : lambda) {
        if (!std::isfinite(l)) throw Error("modes.invalid", "lambda must be finite");
    }
}

void require_no_tv(const Problem& p) {
    if (p.config().sigma_tv > 0.0) {
        throw Error("config.backend", "transport energies do not support sigma_tv > 0; use the graph-cut backend");
    }
}

std::vector<double> scaled_supplies(const Problem& p, double m) {
    std::vector<double> s = p.tmpl().masses;
    if (m != 1.0) {
        for (double& v : s) v *= m;
    }
    return s;
}

// Solves the truncated problem, widening the truncation while overflow mass
// remains; zero overflow certifies that the truncated optimum is the full one.
// Non-singleton bounds stop after the first solve because any truncation is a
// valid relaxation there.
template <class Assemble>
TransportResult solve_truncated(const Problem& p, std::span<const double> supplies, Assemble assemble,
                                bool exact, double& radius) {
    radius = p.initial_radius();
    std::size_t entries = p.config().row_entries;
    while (true) {
        SparseCost cost;
        try {
            cost = assemble(radius, entries);
        } catch (const Error& e) {
            if (e.code() != "transport.radius") throw;
            radius *= 2.0;
            continue;
        }
        TransportResult res = solve_partial_transport(cost, supplies, p.image().capacities);
        if (!exact || res.plan.overflow_mass() <= kMassTolerance) return res;
        if (cost.saturated()) {
            const double supply = std::accumulate(supplies.begin(), supplies.end(), 0.0);
            const double capacity = p.image().total_capacity();
            if (supply > capacity + kMassTolerance) {
                throw Error("transport.infeasible", "template mass exceeds image capacity; deficit " +
                                                        std::to_string(supply - capacity) + " mass");
            }
            return res;
        }
        if (radius < cost.saturation_radius()) {
            radius = std::min(2.0 * radius, cost.saturation_radius() * (1.0 + 1e-12));
        }
        if (entries != 0) entries = entries * 2 >= p.image().size() ? 0 : entries * 2;
    }
}

} // namespace

double energy_Ehat(std::span<const double> lambda, const Coupling& pi, const Problem& problem) {
    check_lambda(lambda, problem);
    pi.validate();
    const double kappa = 1.0 / problem.mass_factor(lambda);
    double cost = 0.0;
    for (const CouplingEntry& e : pi.entries) {
        if (e.j == kOverflow) throw Error("coupling.invalid", "energy is undefined for plans with overflow mass");
        if (e.i >= problem.tmpl().size() || static_cast<std::size_t>(e.j) >= problem.image().size()) {
            throw Error("coupling.range", "coupling index out of range");
        }
        cost += problem.model().pair_cost(e.i, static_cast<std::size_t>(e.j), lambda) * e.mass;
    }
    const auto used = marginals(pi, problem.tmpl().size(), problem.image().size()).image_side;
    for (std::size_t j = 0; j < used.size(); ++j) {
        if (used[j] > problem.image().capacities[j] + kMassTolerance) {
            throw Error("coupling.invalid", "plan exceeds the capacity of image point " + std::to_string(j));
        }
    }
    double value = 0.5 * kappa * cost + F_eval(problem.basis(), lambda);
    if (problem.config().sigma_tv > 0.0) {
        const Segmentation seg = project_to_segmentation(pi, problem.image());
        value += problem.config().sigma_tv * problem.tv_factor(lambda) * tv_G(seg, problem.image());
    }
    return value;
}

double transport_value(std::span<const double> lambda, double mass_multiplier, const Problem& problem) {
    check_lambda(lambda, problem);
    const auto supplies = scaled_supplies(problem, mass_multiplier);
    double radius = 0.0;
    const auto res = solve_truncated(
        problem, supplies, [&](double r, std::size_t k) { return problem.model().assemble(lambda, r, k); }, true,
        radius);
    return res.objective;
}

TransportEnergy E1(std::span<const double> lambda, const Problem& problem) {
    check_lambda(lambda, problem);
    require_no_tv(problem);
    const double m = problem.mass_factor(lambda);
    const auto supplies = scaled_supplies(problem, m);
    TransportEnergy out;
    TransportResult res = solve_truncated(
        problem, supplies, [&](double r, std::size_t k) { return problem.model().assemble(lambda, r, k); }, true,
        out.radius);
    out.objective = res.objective;
    out.value = 0.5 / m * res.objective + F_eval(problem.basis(), lambda);
    out.plan = std::move(res.plan);
    return out;
}

double E2(const LambdaBox& box, const Problem& problem) {
    box.validate();
    check_lambda(box.lower, problem);
    require_no_tv(problem);
    double m = 1.0;
    if (problem.scale_index()) m = 1.0 / scale_density_factor(box.lower[*problem.scale_index()]);
    const auto supplies = scaled_supplies(problem, m);
    double radius = 0.0;
    const TransportResult res = solve_truncated(
        problem, supplies, [&](double r, std::size_t k) { return problem.model().assemble_bound(box, r, k); },
        box.is_singleton(), radius);
    return 0.5 / m * res.objective + box_min_F(problem.basis(), box);
}

TransportEnergy Es1(std::span<const double> lambda, const Problem& problem) {
    if (!problem.scale_index()) throw Error("energy.invalid", "Es1 needs an active scale mode");
    return E1(lambda, problem);
}

double Es2b(const LambdaBox& box, const Problem& problem) {
    if (!problem.scale_index()) throw Error("energy.invalid", "Es2b needs an active scale mode");
    return E2(box, problem);
}

double c_min(std::size_t j, std::span<const double> lambda, const Problem& problem) {
    check_lambda(lambda, problem);
    if (j >= problem.image().size()) throw Error("energy.invalid", "image index out of range");
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < problem.tmpl().size(); ++i) {
        best = std::min(best, problem.model().pair_cost(i, j, lambda));
    }
    return best;
}

RelaxedEnergy Er1(std::span<const double> lambda, const Problem& problem) {
    check_lambda(lambda, problem);
    const double kappa = 1.0 / problem.mass_factor(lambda);
    const ImageDomain& image = problem.image();
    const NearestMatch nn = problem.model().nearest(lambda);
    std::vector<double> unaries(image.size());
    for (std::size_t j = 0; j < image.size(); ++j) unaries[j] = 0.5 * kappa * nn.cost[j] * image.capacities[j];
    std::vector<Edge> edges = image.adjacency;
    const double w = problem.config().sigma_tv * problem.tv_factor(lambda);
    for (Edge& e : edges) e.weight *= w;
    const CutResult cut = min_cut(build_flow_graph(unaries, w > 0.0 ? std::span<const Edge>(edges)
                                                                      : std::span<const Edge>()));
    RelaxedEnergy out;
    out.value = cut.energy + F_eval(problem.basis(), lambda);
    out.labels = cut.labels;
    out.segmentation.nu.assign(image.size(), 0.0);
    for (std::size_t j = 0; j < image.size(); ++j) {
        if (!cut.labels[j]) continue;
        out.segmentation.nu[j] = image.capacities[j];
        out.plan.entries.push_back({static_cast<std::size_t>(nn.source[j]), static_cast<std::int64_t>(j),
                                    image.capacities[j]});
    }
    return out;
}

double Er1_bound(const LambdaBox& box, const Problem& problem) {
    box.validate();
    check_lambda(box.lower, problem);
    double kappa_lo = 1.0, kappa_hi = 1.0, tv = 1.0;
    if (const auto s = problem.scale_index()) {
        kappa_lo = scale_density_factor(box.upper[*s]);
        kappa_hi = scale_density_factor(box.lower[*s]);
        if (problem.config().rescale_tv_with_scale) tv = 1.0 / (1.0 + box.upper[*s]);
    }
    const ImageDomain& image = problem.image();
    const std::vector<double> cb = problem.model().nearest_bound(box);
    std::vector<double> unaries(image.size());
    for (std::size_t j = 0; j < image.size(); ++j) {
        unaries[j] = 0.5 * (cb[j] >= 0.0 ? kappa_lo : kappa_hi) * cb[j] * image.capacities[j];
    }
    std::vector<Edge> edges = image.adjacency;
    const double w = problem.config().sigma_tv * tv;
    for (Edge& e : edges) e.weight *= w;
    const CutResult cut = min_cut(build_flow_graph(unaries, w > 0.0 ? std::span<const Edge>(edges)
                                                                      : std::span<const Edge>()));
    return cut.energy + box_min_F(problem.basis(), box);
}

} // namespace wmseg
