#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "support.hpp"
#include "wmseg/energy.hpp"
#include "wmseg/error.hpp"
#include "wmseg/graphcut.hpp"
#include "wmseg/lifting.hpp"
#include "wmseg/optimize_alt.hpp"
#include "wmseg/optimize_bnb.hpp"
#include "wmseg/scenario.hpp"
#include "wmseg/transport.hpp"

using namespace wmseg;
using testing::uniform;
using testing::uniform_int;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Pinned tolerances and limits.
constexpr double kOracleRel = 1e-9;
constexpr double kOracleSeconds = 5.0;
constexpr double kSoundness = 1e-9;
constexpr double kSingletonRel = 1e-8;
constexpr double kBoundSeconds = 120.0;
constexpr double kGapFraction = 1e-2;
constexpr double kGridStepPx = 0.5;
constexpr double kBnbSeconds = 600.0;
constexpr double kMonotone = 1e-9;
constexpr double kRelaxation = 1e-9;
constexpr double kLiftError = 0.05;
constexpr double kSuperlinear = 1e-9;
constexpr double kRotationSlack = 1e-9;
constexpr double kIouClean = 0.95;
constexpr double kIouNoisy = 0.85;
constexpr double kNoiseStd = 0.3;
constexpr double kSigmaTv = 0.1;

struct Outcome {
    bool pass = true;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

Outcome transport_oracle() {
    std::mt19937_64 rng(101);
    double worst = 0.0, solver_time = 0.0;
    std::size_t compared = 0, infeasible_ok = 0;
    bool ok = true;
    for (int trial = 0; trial < 200; ++trial) {
        const auto nx = static_cast<std::size_t>(uniform_int(rng, 1, 6));
        const auto ny = static_cast<std::size_t>(uniform_int(rng, 1, 6));
        std::vector<double> supplies(nx), caps(ny), dense(nx * ny), overflow(nx);
        for (double& s : supplies) s = 0.5 * uniform_int(rng, 1, 3);
        for (double& m : caps) m = 0.5 * uniform_int(rng, 1, 3);
        for (double& v : dense) v = uniform(rng, 0.0, 10.0);
        const bool allow_overflow = uniform_int(rng, 0, 1) == 0;
        for (double& o : overflow) o = allow_overflow ? uniform(rng, 2.0, 12.0) : kInf;
        SparseCost c = SparseCost::dense(nx, ny, dense);
        c.overflow = overflow;
        const double expected = testing::transport_oracle(dense, overflow, supplies, caps, 0.5);
        const auto t0 = Clock::now();
        try {
            const TransportResult r = solve_partial_transport(c, supplies, caps);
            solver_time += seconds_since(t0);
            if (!std::isfinite(expected)) {
                ok = false;
                continue;
            }
            worst = std::max(worst, rel_diff(r.objective, expected));
            ++compared;
        } catch (const Error&) {
            solver_time += seconds_since(t0);
            if (std::isfinite(expected)) ok = false;
            else ++infeasible_ok;
        }
    }
    ok = ok && worst <= kOracleRel && solver_time < kOracleSeconds;
    return {ok, fmt("compared=%zu infeasible=%zu max_rel=%.2e solver=%.3fs", compared, infeasible_ok, worst, solver_time)};
}

LambdaBox box_around(std::mt19937_64& rng, const ModeBasis& basis, std::span<const double> centre) {
    LambdaBox b;
    for (std::size_t k = 0; k < basis.size(); ++k) {
        const bool translation =
            basis.modes[k].role == ModeRole::translation_x || basis.modes[k].role == ModeRole::translation_y;
        const double w = translation ? uniform(rng, 0.2, 2.0) : uniform(rng, 0.02, 0.3);
        b.lower.push_back(centre[k] - w * uniform(rng, 0.0, 1.0));
        b.upper.push_back(centre[k] + w * uniform(rng, 0.0, 1.0));
    }
    return b;
}

std::vector<double> sample_in(std::mt19937_64& rng, const LambdaBox& b) {
    std::vector<double> l;
    for (std::size_t k = 0; k < b.dim(); ++k) l.push_back(uniform(rng, b.lower[k], b.upper[k]));
    return l;
}

Outcome bound_soundness() {
    std::mt19937_64 rng(202);
    const auto t0 = Clock::now();
    double worst_sound = -kInf, worst_single = 0.0, worst_nest = -kInf;
    for (int trial = 0; trial < 50; ++trial) {
        const testing::Instance s = testing::random_instance(rng, 50, 14, 3 + trial % 2);
        const Problem p = testing::make_problem(s);
        const auto centre = testing::random_lambda(rng, s.basis, 7.0, 7.0);
        const LambdaBox box = box_around(rng, s.basis, centre);
        const double e2 = E2(box, p);
        for (int k = 0; k < 20; ++k) {
            const auto l = sample_in(rng, box);
            const double e1 = E1(l, p).value;
            worst_sound = std::max(worst_sound, (e2 - e1) / std::max(1.0, std::abs(e1)));
        }
        const double single = E2(LambdaBox::point(centre), p);
        worst_single = std::max(worst_single, rel_diff(single, E1(centre, p).value));
        LambdaBox child = box;
        const auto mid = sample_in(rng, box);
        for (std::size_t k = 0; k < child.dim(); ++k) {
            if (uniform_int(rng, 0, 1) == 0) child.lower[k] = mid[k];
            else child.upper[k] = mid[k];
        }
        worst_nest = std::max(worst_nest, (e2 - E2(child, p)) / std::max(1.0, std::abs(e2)));
    }
    const double elapsed = seconds_since(t0);
    const bool ok = worst_sound <= kSoundness && worst_single <= kSingletonRel && worst_nest <= kSoundness &&
                    elapsed < kBoundSeconds;
    return {ok, fmt("max(E2-E1)=%.2e singleton_rel=%.2e max(E2parent-E2child)=%.2e time=%.1fs", worst_sound,
                    worst_single, worst_nest, elapsed)};
}

Outcome bnb_vs_grid() {
    std::mt19937_64 rng(303);
    const TemplateShape t = template_from_contour(builtin_shape("star", 7.5), 1.0);
    const ModeBasis b = geometric_basis(t, false);
    double r_max = 0.0;
    for (const Point2& d : b.modes[2].displacements) r_max = std::max(r_max, norm(d));
    const double rot_step = kGridStepPx / r_max;

    const auto t0 = Clock::now();
    bool ok = true;
    double worst_match = 0.0, worst_gap = 0.0;
    for (int scene = 0; scene < 10; ++scene) {
        ScenarioSpec spec;
        spec.tmpl = t;
        spec.basis = b;
        spec.lambda_star = {uniform(rng, 14.0, 18.0), uniform(rng, 14.0, 18.0), uniform(rng, -0.3, 0.3)};
        spec.width = spec.height = 32;
        spec.seed = static_cast<std::uint64_t>(scene);
        const Scenario sc = synth_scenario(spec);
        EnergyConfig cfg;
        cfg.g_background = background_shift(sc.image, {0.0}, 1.0);
        const Problem p(t, sc.image, b, FeatureCost::squared_euclidean(), cfg);

        const double cx = std::round(spec.lambda_star[0]), cy = std::round(spec.lambda_star[1]);
        const LambdaBox region{{cx - 6.0, cy - 6.0, -0.6}, {cx + 6.0, cy + 6.0, 0.6}, {}};
        BnbOptions o;
        o.stop_px = 0.1;
        const BnbResult r = bnb_optimize(region, p, o);

        const auto axis = [](double lo, double hi, double step) {
            std::vector<double> v;
            const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
            for (std::size_t k = 0; k <= n; ++k) v.push_back(lo + step * static_cast<double>(k));
            return v;
        };
        const auto gx = axis(region.lower[0], region.upper[0], kGridStepPx);
        const auto gy = axis(region.lower[1], region.upper[1], kGridStepPx);
        const auto gr = axis(region.lower[2], region.upper[2], rot_step);
        std::vector<double> grid(gx.size() * gy.size() * gr.size());
        const auto at = [&](std::size_t a, std::size_t c, std::size_t d) { return (a * gy.size() + c) * gr.size() + d; };
        for (std::size_t a = 0; a < gx.size(); ++a) {
            for (std::size_t c = 0; c < gy.size(); ++c) {
                for (std::size_t d = 0; d < gr.size(); ++d) {
                    const std::vector<double> l{gx[a], gy[c], gr[d]};
                    grid[at(a, c, d)] = E1(l, p).value;
                }
            }
        }
        const auto arg = static_cast<std::size_t>(std::min_element(grid.begin(), grid.end()) - grid.begin());
        const double best = grid[arg];
        const double scale = *std::max_element(grid.begin(), grid.end()) - best;
        // Grid resolution: largest energy change from the grid argmin to a neighbouring grid node.
        const std::size_t ia = arg / (gy.size() * gr.size()), ic = arg / gr.size() % gy.size(), id = arg % gr.size();
        double resolution = 0.0;
        for (int axis_k = 0; axis_k < 3; ++axis_k) {
            for (int sgn : {-1, 1}) {
                std::size_t n[3] = {ia, ic, id};
                n[axis_k] += static_cast<std::size_t>(sgn);
                if (n[0] < gx.size() && n[1] < gy.size() && n[2] < gr.size()) {
                    resolution = std::max(resolution, std::abs(grid[at(n[0], n[1], n[2])] - best));
                }
            }
        }
        const double mismatch = std::abs(r.value - best);
        worst_match = std::max(worst_match, mismatch / std::max(resolution, 1e-300));
        worst_gap = std::max(worst_gap, r.gap / scale);
        ok = ok && mismatch <= resolution && r.gap <= kGapFraction * scale && r.lower_bound <= best + 1e-9 &&
             !r.budget_exhausted;
    }
    const double elapsed = seconds_since(t0);
    ok = ok && elapsed < kBnbSeconds;
    return {ok, fmt("points=%zu max|value-grid|/resolution=%.3f max gap/scale=%.2e time=%.1fs", t.size(), worst_match,
                    worst_gap, elapsed)};
}

Outcome alternating_monotone() {
    std::mt19937_64 rng(404);
    double worst = -kInf;
    std::size_t runs = 0;
    for (Backend backend : {Backend::transport, Backend::graphcut}) {
        for (int trial = 0; trial < 100; ++trial) {
            const testing::Instance s = testing::random_instance(rng, 15, 12, 3 + trial % 2);
            const auto start = testing::random_lambda(rng, s.basis, 6.0, 6.0);
            AltOptions o;
            o.backend = backend;
            const double tv = backend == Backend::graphcut ? uniform(rng, 0.0, 0.5) : 0.0;
            const AltResult r = alternating_optimize(start, testing::make_problem(s, tv), o);
            for (std::size_t k = 1; k < r.trace.size(); ++k) {
                worst = std::max(worst, r.trace[k].energy - r.trace[k - 1].energy);
            }
            ++runs;
        }
    }
    return {worst <= kMonotone, fmt("runs=%zu max increase=%.2e", runs, worst)};
}

Outcome mincut_exact() {
    std::mt19937_64 rng(505);
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 100; ++trial) {
        // Integer weights keep every partial sum exact in double precision.
        const auto n = static_cast<std::size_t>(uniform_int(rng, 1, 16));
        std::vector<double> unaries(n);
        for (double& u : unaries) u = uniform_int(rng, -20, 20);
        std::vector<Edge> edges;
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t b = a + 1; b < n; ++b) {
                if (uniform_int(rng, 0, 3) == 0) edges.push_back({a, b, static_cast<double>(uniform_int(rng, 0, 10))});
            }
        }
        const CutResult r = min_cut(build_flow_graph(unaries, edges));
        const double expected = testing::labeling_oracle(unaries, edges);
        if (r.energy != expected || labeling_energy(unaries, edges, r.labels) != expected) ++mismatches;
    }
    return {mismatches == 0, fmt("graphs=100 mismatches=%zu", mismatches)};
}

Outcome relaxation_order() {
    std::mt19937_64 rng(606);
    double worst = -kInf;
    for (int trial = 0; trial < 50; ++trial) {
        const testing::Instance s = testing::random_instance(rng, 20, 12, 3 + trial % 2);
        const Problem p = testing::make_problem(s);
        const auto l = testing::random_lambda(rng, s.basis, 6.0, 6.0);
        worst = std::max(worst, Er1(l, p).value - E1(l, p).value);
    }
    return {worst <= kRelaxation, fmt("instances=50 max(Er1-E1)=%.2e", worst)};
}

Outcome lifting_accuracy() {
    const Polygon disk = builtin_shape("disk", 1.0, 1024);
    const TemplateShape t = template_from_contour(disk, 0.05);
    const auto error = [&](double h, const std::function<double(Point2)>& a,
                           const std::function<Point2(Point2)>& exact) {
        const NeumannGrid grid = NeumannGrid::from_contour(disk, h);
        std::vector<double> values;
        for (const Point2& v : disk) values.push_back(a(v));
        const LiftResult r = lift_contour_deformation(grid, values, t.points);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            const Point2 e = exact(t.points[i]);
            num += t.masses[i] * norm2(r.mode.displacements[i] - e);
            den += t.masses[i] * norm2(e);
        }
        return std::sqrt(num / den);
    };
    const auto one = [](Point2) { return 1.0; };
    const auto cosine = [](Point2 p) { return p.x / norm(p); };
    const auto identity = [](Point2 p) { return p; };
    const auto unit_x = [](Point2) { return Point2{1.0, 0.0}; };
    const double a32 = error(1.0 / 32, one, identity), a64 = error(1.0 / 64, one, identity);
    const double c32 = error(1.0 / 32, cosine, unit_x), c64 = error(1.0 / 64, cosine, unit_x);
    const bool ok = a32 <= kLiftError && a64 < a32 && c32 <= kLiftError && c64 < c32;
    return {ok, fmt("a=1: %.4f -> %.4f  a=cos: %.2e -> %.2e (h=1/32 -> 1/64)", a32, a64, c32, c64)};
}

Outcome mass_superlinear() {
    std::mt19937_64 rng(808);
    double worst = -kInf;
    for (int trial = 0; trial < 100; ++trial) {
        const auto nx = static_cast<std::size_t>(uniform_int(rng, 2, 8));
        const auto ny = static_cast<std::size_t>(uniform_int(rng, 3, 10));
        std::vector<double> dense(nx * ny), supplies(nx), caps(ny);
        for (double& v : dense) v = uniform(rng, 0.0, 5.0);
        for (double& s : supplies) s = uniform(rng, 0.1, 1.0);
        for (double& m : caps) m = uniform(rng, 0.5, 1.5);
        double supply = 0.0, capacity = 0.0;
        for (double s : supplies) supply += s;
        for (double m : caps) capacity += m;
        const double m_max = capacity / supply;
        const double m1 = uniform(rng, 0.05, m_max), m2 = uniform(rng, m1, m_max);
        const auto f = [&](double m) {
            std::vector<double> scaled;
            for (double s : supplies) scaled.push_back(m * s);
            return solve_partial_transport(SparseCost::dense(nx, ny, dense), scaled, caps).objective;
        };
        worst = std::max(worst, f(m1) / m1 - f(m2) / m2);
    }
    return {worst <= kSuperlinear, fmt("instances=100 max(f1/m1-f2/m2)=%.2e", worst)};
}

Outcome rotation_bound() {
    const TemplateShape t = template_from_contour(builtin_shape("star", 7.5), 0.5);
    const Mode rot = make_rotation_mode(t);
    const Point2 c = mass_centroid(t);
    bool ok = true;
    std::string detail;
    for (double phi : {-0.5, -0.3, -0.1, 0.1, 0.3, 0.5}) {
        double worst = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i) {
            const Point2 x = t.points[i] - c;
            if (norm(x) == 0.0) continue;
            const Point2 exact{std::cos(phi) * x.x - std::sin(phi) * x.y, std::sin(phi) * x.x + std::cos(phi) * x.y};
            const Point2 linear = x + phi * rot.displacements[i];
            worst = std::max(worst, norm(exact - linear) / norm(x));
        }
        ok = ok && worst <= phi * phi / 2.0 + kRotationSlack;
        detail += fmt("%+.1f:%.4f/%.4f ", phi, worst, phi * phi / 2.0);
    }
    return {ok, detail};
}

double pipeline_iou(NoiseSpec noise, Backend backend, double sigma_tv) {
    ScenarioSpec spec;
    spec.tmpl = template_from_contour(builtin_shape("star", 7.5), 0.5);
    spec.basis = geometric_basis(spec.tmpl, false);
    spec.lambda_star = {20.0, 19.0, 0.2};
    spec.width = spec.height = 40;
    spec.noise = noise;
    spec.seed = 11;
    const Scenario sc = synth_scenario(spec);
    EnergyConfig cfg;
    cfg.sigma_tv = sigma_tv;
    cfg.g_background = background_shift(sc.image, {0.0}, 1.0);
    const Problem p(spec.tmpl, sc.image, spec.basis, FeatureCost::squared_euclidean(), cfg);
    const LambdaBox region{{0.0, 0.0, -0.6}, {39.0, 39.0, 0.6}, {}};
    BnbOptions bo;
    bo.stop_px = 0.5;
    AltOptions ao;
    ao.backend = backend;
    const CombinedResult r = combined_optimize(region, p, {true, true, true}, bo, ao);
    return mask_iou(r.segmentation.mask(sc.image), sc.truth_mask);
}

Outcome pipeline_quality() {
    const double clean = pipeline_iou({}, Backend::transport, 0.0);
    NoiseSpec noise;
    noise.kind = NoiseSpec::Kind::local_gaussian;
    noise.std_dev = kNoiseStd;
    const double noisy = pipeline_iou(noise, Backend::graphcut, kSigmaTv);
    return {clean >= kIouClean && noisy >= kIouNoisy,
            fmt("clean IoU=%.4f (>= %.2f)  noise %.1f, sigma_tv %.2f IoU=%.4f (>= %.2f)", clean, kIouClean, kNoiseStd,
                kSigmaTv, noisy, kIouNoisy)};
}

} // namespace

int main() {
    const std::vector<std::pair<const char*, Outcome (*)()>> criteria{
        {"transport matches exhaustive oracle", transport_oracle},
        {"convex relaxation bound is sound", bound_soundness},
        {"branch and bound matches grid search", bnb_vs_grid},
        {"alternating energy is non-increasing", alternating_monotone},
        {"min-cut is exact", mincut_exact},
        {"graph-cut relaxation stays below transport energy", relaxation_order},
        {"Neumann lifting accuracy", lifting_accuracy},
        {"transport cost is superlinear in mass", mass_superlinear},
        {"first-order rotation error bound", rotation_bound},
        {"pipeline segmentation quality", pipeline_quality},
    };
    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s %2zu %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first, o.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    return failed == 0 ? 0 : 1;
}
