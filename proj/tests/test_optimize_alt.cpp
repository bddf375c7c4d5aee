#include <doctest.h>

#include <cmath>
#include <random>

#include "support.hpp"
#include "wmseg/error.hpp"
#include "wmseg/optimize_alt.hpp"

using namespace wmseg;

namespace {

TemplateShape single_point() {
    TemplateShape t;
    t.points = {{0, 0}};
    t.masses = {1.0};
    t.features = {{0.0}};
    return t;
}

ImageDomain points_domain(std::vector<Point2> pts) {
    ImageDomain d;
    d.points = std::move(pts);
    d.capacities.assign(d.points.size(), 1.0);
    d.features.assign(d.points.size(), {0.0});
    return d;
}

ModeBasis shift_x(const TemplateShape& t) {
    ModeBasis b;
    b.modes.push_back(make_translation_modes(t).first);
    b.sigma = {0.0};
    return b;
}

// Gradient of 1/2 sum pi |x + A lambda - y|^2 + F(lambda), straight from the definition.
std::vector<double> gradient(const Coupling& pi, std::span<const double> lambda, const Problem& p) {
    const auto moved = apply_transform(p.tmpl(), p.basis(), lambda);
    std::vector<double> g(lambda.size(), 0.0);
    for (const auto& e : pi.entries) {
        const Point2 r = moved[e.i] - p.image().points[static_cast<std::size_t>(e.j)];
        for (std::size_t k = 0; k < lambda.size(); ++k) g[k] += e.mass * dot(r, p.basis().modes[k].displacements[e.i]);
    }
    for (std::size_t k = 0; k < lambda.size(); ++k) {
        if (p.basis().modes[k].role == ModeRole::statistical) {
            g[k] += p.basis().gamma * lambda[k] / (p.basis().sigma[k] * p.basis().sigma[k]);
        }
    }
    return g;
}

std::vector<double> descend(const Coupling& pi, std::vector<double> lambda, const Problem& p) {
    // Step 1/L with L bounded by the trace of the Hessian.
    double trace = 0.0;
    for (const auto& e : pi.entries) {
        for (const Mode& m : p.basis().modes) trace += e.mass * norm2(m.displacements[e.i]);
    }
    for (std::size_t k = 0; k < lambda.size(); ++k) {
        if (p.basis().modes[k].role == ModeRole::statistical) {
            trace += p.basis().gamma / (p.basis().sigma[k] * p.basis().sigma[k]);
        }
    }
    const double step = 1.0 / trace;
    for (int it = 0; it < 200000; ++it) {
        const auto g = gradient(pi, lambda, p);
        double n = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) {
            lambda[k] -= step * g[k];
            n += g[k] * g[k];
        }
        if (std::sqrt(n) < 1e-12) break;
    }
    return lambda;
}

void check_monotone(const AltResult& r) {
    for (std::size_t k = 1; k < r.trace.size(); ++k) CHECK(r.trace[k].energy <= r.trace[k - 1].energy + 1e-9);
}

} // namespace

TEST_CASE("lambda_step for a single pair") {
    const Problem p(single_point(), points_domain({{2, 0}}), shift_x(single_point()), FeatureCost::none(), {});
    const auto l = lambda_step(Coupling{{{0, 0, 1.0}}}, std::vector<double>{0.0}, p);
    REQUIRE(l.size() == 1);
    CHECK(l[0] == doctest::Approx(2.0));
}

TEST_CASE("lambda_step minimizes the coupled energy") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const testing::Instance s = testing::random_instance(rng, 10, 12, 3 + trial % 2);
        const Problem p = testing::make_problem(s);
        const auto start = testing::random_lambda(rng, s.basis, 6.0, 6.0);
        const TransportEnergy e = E1(start, p);
        const auto l = lambda_step(e.plan, start, p);
        CHECK(energy_Ehat(l, e.plan, p) <= energy_Ehat(start, e.plan, p) + 1e-12);

        double gn = 0.0;
        for (double g : gradient(e.plan, l, p)) gn += g * g;
        CHECK(std::sqrt(gn) <= 1e-8);

        const auto oracle = descend(e.plan, start, p);
        for (std::size_t k = 0; k < l.size(); ++k) CHECK(l[k] == doctest::Approx(oracle[k]).epsilon(1e-6).scale(1.0));
    }
}

TEST_CASE("lambda_step keeps frozen coefficients") {
    std::mt19937_64 rng(2);
    const testing::Instance s = testing::random_instance(rng, 10, 12, 3);
    const Problem p = testing::make_problem(s);
    const auto start = testing::random_lambda(rng, s.basis, 6.0, 6.0);
    const TransportEnergy e = E1(start, p);
    const auto l = lambda_step(e.plan, start, p, {false, true, false});
    CHECK(l[1] == start[1]);
    CHECK(energy_Ehat(l, e.plan, p) <= energy_Ehat(start, e.plan, p) + 1e-12);
}

TEST_CASE("a template already in place is a fixed point") {
    TemplateShape t;
    ImageDomain d;
    for (int r = 0; r < 5; ++r) {
        for (int c = 0; c < 5; ++c) {
            t.points.push_back({double(c), double(r)});
            t.masses.push_back(1.0);
            t.features.push_back({1.0});
            d.points.push_back({double(c), double(r)});
            d.capacities.push_back(1.0);
            d.features.push_back({1.0});
        }
    }
    const Problem p(t, d, geometric_basis(t, false), FeatureCost::squared_euclidean(), {});
    const std::vector<double> zero{0, 0, 0};
    const AltResult r = alternating_optimize(zero, p);
    CHECK(r.iterations <= 2);
    for (double l : r.lambda) CHECK(std::abs(l) <= 1e-6);
    CHECK(r.energy == doctest::Approx(0.0).scale(1.0));
}

TEST_CASE("toy problem converges to the nearer basin") {
    const Problem p(single_point(), points_domain({{0, 0}, {5, 0}}), shift_x(single_point()), FeatureCost::none(), {});
    const AltResult r = alternating_optimize(std::vector<double>{1.0}, p);
    CHECK(r.lambda[0] == doctest::Approx(0.0).scale(1.0));
    CHECK(r.energy == doctest::Approx(0.0).scale(1.0));
    CHECK(r.converged);
    const AltResult far = alternating_optimize(std::vector<double>{3.0}, p);
    CHECK(far.lambda[0] == doctest::Approx(5.0));
}

TEST_CASE("energy traces never increase") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 30; ++trial) {
        const testing::Instance s = testing::random_instance(rng, 12, 12, 3 + trial % 2);
        const auto start = testing::random_lambda(rng, s.basis, 6.0, 6.0);
        const AltResult t = alternating_optimize(start, testing::make_problem(s));
        check_monotone(t);
        CHECK(t.energy <= E1(start, testing::make_problem(s)).value + 1e-9);

        AltOptions gc;
        gc.backend = Backend::graphcut;
        check_monotone(alternating_optimize(start, testing::make_problem(s, 0.2), gc));
    }
}

TEST_CASE("scale coefficient search stays monotone and in range") {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 5; ++trial) {
        testing::Instance s = testing::random_instance(rng, 12, 12, 3);
        s.basis = geometric_basis(s.tmpl, true);
        auto start = testing::random_lambda(rng, s.basis, 6.0, 6.0);
        start[3] = 0.0;
        const AltResult r = alternating_optimize(start, testing::make_problem(s));
        check_monotone(r);
        CHECK(r.lambda[3] >= -0.5);
        CHECK(r.lambda[3] <= 1.0);
    }
}

TEST_CASE("backend names") {
    CHECK(backend_from_string("graphcut") == Backend::graphcut);
    CHECK(to_string(Backend::transport) == "transport");
    CHECK_THROWS_AS(backend_from_string("lp"), Error);
}
