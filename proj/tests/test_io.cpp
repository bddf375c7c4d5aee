#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "support.hpp"
#include "wmseg/error.hpp"
#include "wmseg/io.hpp"

using namespace wmseg;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "wmseg_test_io";
    fs::create_directories(dir);
    return dir / name;
}

std::string code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return "";
}

} // namespace

TEST_CASE("template round trip is value-identical") {
    std::mt19937_64 rng(1);
    TemplateShape t = testing::random_template(rng, 25, 3.0);
    t.contour = Polygon{{-4, -4}, {4, -4}, {4, 4}, {-4, 4}};
    const fs::path p = scratch("template.json");
    io::save_template(t, p);
    const TemplateShape back = io::load_template(p);
    CHECK(back.points == t.points);
    CHECK(back.masses == t.masses);
    CHECK(back.features == t.features);
    REQUIRE(back.contour.has_value());
    CHECK(*back.contour == *t.contour);
    CHECK(io::to_json(back) == io::to_json(t));
}

TEST_CASE("image JSON and PGM loading") {
    const std::vector<double> f{0.0, 0.5, 1.0, 0.25};
    ImageDomain d = testing::lattice_image(2, 2, f);
    const fs::path json_path = scratch("image.json");
    io::write_json(json_path, io::to_json(d));
    const ImageDomain back = io::load_image(json_path);
    CHECK(back.points == d.points);
    CHECK(back.capacities == d.capacities);
    CHECK(back.features == d.features);
    CHECK(back.adjacency.size() == d.adjacency.size());

    io::GrayImage g{3, 2, {0, 255, 51, 10, 20, 30}};
    const fs::path pgm = scratch("image.pgm");
    io::write_pgm(g, pgm);
    const io::GrayImage gb = io::read_pgm(pgm);
    CHECK(gb.width == 3);
    CHECK(gb.height == 2);
    CHECK(gb.pixels == g.pixels);
    const ImageDomain from = io::load_image(pgm);
    REQUIRE(from.size() == 6);
    CHECK(from.points[4] == Point2{1, 1});
    CHECK(from.features[1][0] == doctest::Approx(1.0));
    CHECK(from.features[2][0] == doctest::Approx(0.2));
    CHECK(from.capacities[0] == 1.0);
    CHECK(from.adjacency.size() == 7);
}

TEST_CASE("masks, couplings, adjacency and traces") {
    const std::vector<std::uint8_t> mask{1, 0, 0, 1, 1, 0};
    const fs::path mp = scratch("mask.pgm");
    io::write_mask(mask, 3, 2, mp);
    std::size_t w = 0, h = 0;
    CHECK(io::read_mask(mp, &w, &h) == mask);
    CHECK(w == 3);
    CHECK(io::read_pgm(mp).pixels[0] == 255);

    const Coupling pi{{{0, 2, 0.5}, {1, kOverflow, 0.25}, {3, 0, 1.0 / 3.0}}};
    const fs::path cp = scratch("coupling.csv");
    io::save_coupling_csv(pi, cp);
    const Coupling back = io::load_coupling_csv(cp);
    REQUIRE(back.entries.size() == 3);
    CHECK(back.entries[1].j == kOverflow);
    CHECK(back.entries[2].mass == 1.0 / 3.0);

    const std::vector<Edge> edges{{0, 1, 0.5}, {1, 2, 2.0}};
    const fs::path ap = scratch("adj.csv");
    io::save_adjacency_csv(edges, ap);
    const auto eb = io::load_adjacency_csv(ap, 3);
    REQUIRE(eb.size() == 2);
    CHECK(eb[1].weight == 2.0);
    CHECK_THROWS_AS(io::load_adjacency_csv(ap, 2), Error);

    const std::vector<TraceRow> trace{{0, "pi", {1.0, 2.0}, 3.5, Backend::transport},
                                      {1, "lambda", {1.5, 2.0}, 3.0, Backend::transport}};
    const fs::path tp = scratch("trace.csv");
    io::save_trace_csv(trace, tp);
    const std::string text = io::read_text(tp);
    CHECK(text.rfind("iteration,lambda_0,lambda_1,energy,backend,step", 0) == 0);
    CHECK(text.find("lambda") != std::string::npos);
}

TEST_CASE("modes, contours, lambda and regions") {
    std::mt19937_64 rng(4);
    const TemplateShape t = testing::random_template(rng, 10, 2.0);
    ModeBasis b = testing::random_basis(rng, t, 4);
    const fs::path p = scratch("modes.json");
    io::save_modes(b, p);
    const ModeBasis back = io::load_modes(p);
    REQUIRE(back.size() == b.size());
    CHECK(back.sigma == b.sigma);
    CHECK(back.gamma == b.gamma);
    for (std::size_t k = 0; k < b.size(); ++k) {
        CHECK(back.modes[k].displacements == b.modes[k].displacements);
        CHECK(back.modes[k].role == b.modes[k].role);
        CHECK(back.modes[k].divergence_class == b.modes[k].divergence_class);
    }

    const Polygon tri{{0, 0}, {1, 0}, {0, 1}};
    CHECK(io::polygon_from_json(io::to_json(tri)) == tri);
    io::write_json(scratch("contour.json"), {{"contour", io::to_json(tri)}});
    CHECK(io::load_contour(scratch("contour.json")) == tri);

    io::write_text(scratch("lambda.json"), "{\"lambda\": [1, 2.5]}");
    CHECK(io::load_lambda(scratch("lambda.json")) == std::vector<double>{1.0, 2.5});

    std::vector<std::size_t> grid;
    const LambdaBox r = io::box_from_json(io::json::parse(R"({"lower":[0,1],"upper":[2,3],"grid":[4,1]})"), &grid);
    CHECK(r.lower == std::vector<double>{0, 1});
    CHECK(r.upper == std::vector<double>{2, 3});
    CHECK(grid == std::vector<std::size_t>{4, 1});
    CHECK(code_of([] { io::box_from_json(io::json::parse(R"({"lower":[1],"upper":[0]})")); }) == "box.invalid");
}

TEST_CASE("error codes") {
    CHECK(code_of([] { io::read_text(scratch("does_not_exist.json")); }) == "io.missing");
    CHECK(code_of([] { io::load_image(scratch("does_not_exist.pgm")); }) == "io.missing");
    io::write_text(scratch("bad.json"), "{not json");
    CHECK(code_of([] { io::read_json(scratch("bad.json")); }) == "io.parse");
    io::write_text(scratch("bad.pgm"), "P5\n2 2\n255\n\x01");
    CHECK(code_of([] { io::read_pgm(scratch("bad.pgm")); }) == "io.parse");
    io::write_text(scratch("bad_template.json"), R"({"points":[[0,0]],"masses":[-1],"features":[[1]]})");
    CHECK_FALSE(code_of([] { io::load_template(scratch("bad_template.json")); }).empty());
}
