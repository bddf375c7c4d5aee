#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "wmseg/error.hpp"
#include "wmseg/modes.hpp"

using namespace wmseg;

namespace {

TemplateShape centred_template() {
    TemplateShape t;
    t.points = {{1, 0}, {-1, 0}, {0, 0}, {2, -1}, {-2, 1}};
    t.masses.assign(5, 1.0);
    t.features.assign(5, {1.0});
    return t;
}

} // namespace

TEST_CASE("translation modes are constant unit fields") {
    std::mt19937_64 rng(3);
    const TemplateShape t = testing::random_template(rng, 20, 4.0);
    const auto [m1, m2] = make_translation_modes(t);
    for (std::size_t i = 0; i < t.size(); ++i) {
        CHECK(m1.displacements[i] == Point2{1, 0});
        CHECK(m2.displacements[i] == Point2{0, 1});
    }
    CHECK(m1.divergence_class == DivergenceClass::zero_div);
    CHECK(m2.divergence_class == DivergenceClass::zero_div);
    CHECK(m1.max_norm() == doctest::Approx(1.0));
}

TEST_CASE("rotation mode") {
    const TemplateShape t = centred_template();
    REQUIRE(mass_centroid(t) == Point2{0, 0});
    const Mode r = make_rotation_mode(t);
    CHECK(r.displacements[0].x == doctest::Approx(0.0));
    CHECK(r.displacements[0].y == doctest::Approx(1.0));
    CHECK(r.displacements[2] == Point2{0, 0});
    CHECK(r.divergence_class == DivergenceClass::zero_div);
    CHECK(r.role == ModeRole::rotation);
}

TEST_CASE("rotation first-order remainder stays below phi^2/2") {
    const TemplateShape t = centred_template();
    const Mode r = make_rotation_mode(t);
    for (double phi = -0.6; phi <= 0.6 + 1e-12; phi += 0.01) {
        for (std::size_t i = 0; i < t.size(); ++i) {
            const Point2 x = t.points[i];
            const double nx = norm(x);
            if (nx == 0.0) continue;
            const Point2 exact{std::cos(phi) * x.x - std::sin(phi) * x.y, std::sin(phi) * x.x + std::cos(phi) * x.y};
            const Point2 lin = x + phi * r.displacements[i];
            CHECK(norm(exact - lin) <= 0.5 * phi * phi * nx + 1e-12);
        }
    }
}

TEST_CASE("scale mode and density factor") {
    TemplateShape t;
    t.points = {{2, -1}, {-2, 1}, {0, 0}};
    t.masses.assign(3, 1.0);
    t.features.assign(3, {1.0});
    const Mode s = make_scale_mode(t);
    CHECK(s.displacements[0] == Point2{2, -1});
    CHECK(s.displacements[2] == Point2{0, 0});
    CHECK(s.divergence_class == DivergenceClass::scale);
    CHECK(scale_density_factor(0.1) == doctest::Approx(1.0 / 1.21));
    CHECK(scale_density_factor(0.1) == doctest::Approx(0.8264).epsilon(1e-4));
    CHECK_THROWS_AS(scale_density_factor(-1.0), Error);
}

TEST_CASE("apply_transform") {
    TemplateShape t;
    t.points = {{1, 1}};
    t.masses = {1.0};
    t.features = {{1.0}};
    ModeBasis b;
    b.modes.push_back(make_translation_modes(t).first);
    b.sigma = {0.0};
    auto moved = apply_transform(t, b, std::vector<double>{3.0});
    CHECK(moved[0] == Point2{4, 1});
    moved = apply_transform(t, b, std::vector<double>{0.0});
    CHECK(moved[0] == t.points[0]);

    const TemplateShape c = centred_template();
    ModeBasis rb;
    rb.modes.push_back(make_rotation_mode(c));
    rb.sigma = {0.0};
    moved = apply_transform(c, rb, std::vector<double>{0.1});
    CHECK(moved[0].x == doctest::Approx(1.0));
    CHECK(moved[0].y == doctest::Approx(0.1));
    CHECK_THROWS_AS(apply_transform(c, rb, std::vector<double>{0.1, 0.2}), Error);
}

TEST_CASE("F_eval") {
    const TemplateShape t = centred_template();
    ModeBasis b = geometric_basis(t, false);
    Mode stat;
    stat.displacements.assign(t.size(), Point2{0.1, 0.0});
    b.modes.push_back(stat);
    b.sigma.push_back(1.0);
    b.gamma = 2.0;
    CHECK(F_eval(b, std::vector<double>{0, 0, 0, 0}) == 0.0);
    CHECK(F_eval(b, std::vector<double>{0, 0, 0, 3}) == doctest::Approx(9.0));
    CHECK(F_eval(b, std::vector<double>{5, -7, 0.3, 0}) == 0.0);
}

TEST_CASE("basis validation") {
    const TemplateShape t = centred_template();
    ModeBasis b = geometric_basis(t, true);
    CHECK(b.size() == 4);
    REQUIRE(b.scale_index().has_value());
    CHECK(*b.scale_index() == 3);
    CHECK_NOTHROW(b.validate(t.size()));
    CHECK_THROWS_AS(b.validate(t.size() + 1), Error);

    ModeBasis twice = b;
    twice.modes.push_back(make_scale_mode(t));
    twice.sigma.push_back(0.0);
    CHECK_THROWS_AS(twice.validate(t.size()), Error);

    ModeBasis order;
    Mode stat;
    stat.displacements.assign(t.size(), Point2{1, 0});
    order.modes = {stat, make_rotation_mode(t)};
    order.sigma = {1.0, 0.0};
    CHECK_THROWS_AS(order.validate(t.size()), Error);
}

TEST_CASE("string conversions round trip") {
    for (auto c : {DivergenceClass::zero_div, DivergenceClass::scale, DivergenceClass::general}) {
        CHECK(divergence_class_from_string(to_string(c)) == c);
    }
    for (auto r : {ModeRole::translation_x, ModeRole::translation_y, ModeRole::rotation, ModeRole::scale, ModeRole::statistical}) {
        CHECK(mode_role_from_string(to_string(r)) == r);
    }
    CHECK_THROWS_AS(mode_role_from_string("shear"), Error);
}
