#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "wmseg/measure.hpp"

namespace wmseg {

enum class DivergenceClass { zero_div, scale, general };
enum class ModeRole { translation_x, translation_y, rotation, scale, statistical };

std::string_view to_string(DivergenceClass c);
std::string_view to_string(ModeRole r);
DivergenceClass divergence_class_from_string(std::string_view s);
ModeRole mode_role_from_string(std::string_view s);

// A displacement field t_i, one 2-vector per template point.
struct Mode {
    std::vector<Point2> displacements;
    DivergenceClass divergence_class = DivergenceClass::general;
    ModeRole role = ModeRole::statistical;

    double max_norm() const;
};

// Ordered modes. Geometric modes (translation, rotation, scale) come first;
// sigma holds one entry per mode and is only read for statistical modes.
struct ModeBasis {
    std::vector<Mode> modes;
    std::vector<double> sigma;
    double gamma = 0.1;

    std::size_t size() const { return modes.size(); }
    std::optional<std::size_t> scale_index() const;
    bool is_statistical(std::size_t k) const { return modes[k].role == ModeRole::statistical; }

    void validate(std::size_t template_size) const;

    // Copy without statistical modes whose sigma is zero.
    ModeBasis without_degenerate_modes() const;
};

std::pair<Mode, Mode> make_translation_modes(const TemplateShape& tmpl);
// t_r(x) = (-x2, x1) with x relative to the mass centroid of the template.
Mode make_rotation_mode(const TemplateShape& tmpl);
// t_s(x) = x relative to the mass centroid.
Mode make_scale_mode(const TemplateShape& tmpl);

Point2 mass_centroid(const TemplateShape& tmpl);

// Translation x/y and rotation, plus scale when requested.
ModeBasis geometric_basis(const TemplateShape& tmpl, bool with_scale);

// Density factor (1 + lambda_s)^-2 of the pushed-forward template under the scale mode.
double scale_density_factor(double lambda_s);

// T_lambda(x) = x + sum_i lambda_i t_i(x).
std::vector<Point2> apply_transform(const TemplateShape& tmpl, const ModeBasis& basis, std::span<const double> lambda);

// Gaussian prior on the statistical coefficients: (gamma / 2) sum (lambda_i / sigma_i)^2.
// Returns +inf when some sigma_i = 0 carries a non-zero coefficient.
double F_eval(const ModeBasis& basis, std::span<const double> lambda);

} // namespace wmseg
