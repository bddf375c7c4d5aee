#include <doctest.h>

#include <cstring>
#include <random>

#include "support.hpp"
#include "wmseg/error.hpp"
#include "wmseg/simd/kernels.hpp"
#include "wmseg/transport.hpp"

using namespace wmseg;

namespace {

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (double& x : v) x = testing::uniform(rng, lo, hi);
    return v;
}

} // namespace

TEST_CASE("dispatch reports a usable level") {
    const simd::Level l = simd::detected_level();
    CHECK_NOTHROW(simd::table(l));
    CHECK_NOTHROW(simd::set_level(simd::Level::scalar));
    CHECK(simd::active_level() == simd::Level::scalar);
    simd::set_level(l);
    CHECK(simd::to_string(simd::Level::scalar) == "scalar");
}

TEST_CASE("vector kernels are bit-identical to the scalar reference") {
    if (simd::detected_level() != simd::Level::avx2) {
        MESSAGE("AVX2 not available; only the scalar kernels were exercised");
        return;
    }
    const auto& s = simd::table(simd::Level::scalar);
    const auto& v = simd::table(simd::Level::avx2);
    std::mt19937_64 rng(77);
    for (std::size_t n : {std::size_t{0}, std::size_t{1}, std::size_t{3}, std::size_t{4}, std::size_t{7},
                          std::size_t{64}, std::size_t{1001}}) {
        const auto xs = random_vec(rng, n, -50, 50), ys = random_vec(rng, n, -50, 50);
        const auto extra = random_vec(rng, n, -3, 3);
        const double px = testing::uniform(rng, -10, 10), py = testing::uniform(rng, -10, 10);

        std::vector<double> a(n), b(n);
        s.sqdist(px, py, xs.data(), ys.data(), n, a.data());
        v.sqdist(px, py, xs.data(), ys.data(), n, b.data());
        CHECK(same_bits(a, b));

        std::vector<double> best_a(n, 1e3), best_b(n, 1e3);
        std::vector<std::int32_t> arg_a(n, -1), arg_b(n, -1);
        for (std::int32_t idx = 0; idx < 5; ++idx) {
            const double qx = testing::uniform(rng, -10, 10), qy = testing::uniform(rng, -10, 10);
            s.sqdist_min(qx, qy, xs.data(), ys.data(), idx % 2 ? extra.data() : nullptr, n, best_a.data(), arg_a.data(), idx);
            v.sqdist_min(qx, qy, xs.data(), ys.data(), idx % 2 ? extra.data() : nullptr, n, best_b.data(), arg_b.data(), idx);
        }
        CHECK(same_bits(best_a, best_b));
        CHECK(arg_a == arg_b);

        std::vector<Point2> gens{{testing::uniform(rng, -2, 2), testing::uniform(rng, -2, 2)},
                                 {testing::uniform(rng, -2, 2), testing::uniform(rng, -2, 2)},
                                 {testing::uniform(rng, -2, 2), testing::uniform(rng, -2, 2)}};
        for (std::size_t g = 0; g <= gens.size(); ++g) {
            const Zonotope z = make_zonotope({px, py}, std::span<const Point2>(gens.data(), g));
            s.polygon_sqdist(z.edges, px, py, xs.data(), ys.data(), n, a.data());
            v.polygon_sqdist(z.edges, px, py, xs.data(), ys.data(), n, b.data());
            CHECK(same_bits(a, b));
        }

        std::vector<double> ya = extra, yb = extra;
        s.axpy(0.37, xs.data(), ya.data(), n);
        v.axpy(0.37, xs.data(), yb.data(), n);
        CHECK(same_bits(ya, yb));
    }
}

TEST_CASE("polygon distance matches a direct computation") {
    const auto& k = simd::kernels();
    const std::vector<Point2> gens{{1.0, 0.0}, {0.0, 2.0}};
    const Zonotope z = make_zonotope({0.0, 0.0}, gens);
    // Rectangle [-1,1] x [-2,2].
    const std::vector<double> xs{0.0, 3.0, 2.0, 0.5}, ys{0.0, 0.0, 3.0, -2.5};
    std::vector<double> out(4);
    k.polygon_sqdist(z.edges, 0.0, 0.0, xs.data(), ys.data(), 4, out.data());
    CHECK(out[0] == 0.0);
    CHECK(out[1] == doctest::Approx(4.0));
    CHECK(out[2] == doctest::Approx(2.0));
    CHECK(out[3] == doctest::Approx(0.25));
}

TEST_CASE("energies agree across kernel levels") {
    if (simd::detected_level() != simd::Level::avx2) return;
    std::mt19937_64 rng(3);
    const testing::Instance s = testing::random_instance(rng, 20, 16, 3);
    const Problem p = testing::make_problem(s);
    const auto lambda = testing::random_lambda(rng, s.basis, 8.0, 8.0);
    LambdaBox box;
    for (std::size_t k = 0; k < lambda.size(); ++k) {
        box.lower.push_back(lambda[k] - (k < 2 ? 1.0 : 0.1));
        box.upper.push_back(lambda[k] + (k < 2 ? 1.0 : 0.1));
    }
    simd::set_level(simd::Level::scalar);
    const double e1_s = E1(lambda, p).value, e2_s = E2(box, p);
    simd::set_level(simd::Level::avx2);
    const double e1_v = E1(lambda, p).value, e2_v = E2(box, p);
    CHECK(e1_s == e1_v);
    CHECK(e2_s == e2_v);
}
