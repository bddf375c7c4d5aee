#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wmseg/measure.hpp"
#include "wmseg/modes.hpp"

namespace wmseg {

// Closed contours centred at the origin. Names: disk, ellipse, star, rectangle, pear.
Polygon builtin_shape(std::string_view name, double size, std::size_t vertices = 64);

struct NoiseSpec {
    enum class Kind { none, local_gaussian, nonlocal_blobs, occlusion };
    Kind kind = Kind::none;
    double std_dev = 0.0;    // local_gaussian
    std::size_t count = 0;   // nonlocal_blobs
    double size = 0.0;       // blob radius in pixels
    double fraction = 0.0;   // occlusion: share of foreground pixels set to background
};

std::string_view to_string(NoiseSpec::Kind k);
NoiseSpec::Kind noise_kind_from_string(std::string_view s);

struct ScenarioSpec {
    TemplateShape tmpl;  // needs a contour
    ModeBasis basis;
    std::vector<double> lambda_star;
    std::size_t width = 64;
    std::size_t height = 64;
    NoiseSpec noise;
    std::uint64_t seed = 0;
};

struct Scenario {
    ImageDomain image;                     // raster, capacity 1, scalar feature
    std::vector<std::uint8_t> truth_mask;  // rasterized T_{lambda*}(contour)
    Polygon truth_contour;
    std::vector<double> clean_features;    // indicator before noise
};

// Moves a contour with the modes: translation, rotation and scale fields are
// evaluated in closed form, statistical fields are taken from the nearest template point.
Polygon transform_contour(const Polygon& contour, const TemplateShape& tmpl, const ModeBasis& basis,
                          std::span<const double> lambda);

// Throws Error("scenario.placement") when the placed contour leaves the canvas.
Scenario synth_scenario(const ScenarioSpec& spec);

// Background absorption for a foreground template with constant feature:
// g_j = -tau * |f_j - f_background|^2.
std::vector<double> background_shift(const ImageDomain& image, const FeatureVector& background, double tau);

// Intersection over union of two binary masks.
double mask_iou(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);

} // namespace wmseg
