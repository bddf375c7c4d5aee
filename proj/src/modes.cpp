#include "wmseg/modes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "wmseg/error.hpp"

namespace wmseg {

std::string_view to_string(DivergenceClass c) {
    switch (c) {
    case DivergenceClass::zero_div: return "zero-div";
    case DivergenceClass::scale: return "scale";
    case DivergenceClass::general: return "general";
    }
    return "general";
}

std::string_view to_string(ModeRole r) {
    switch (r) {
    case ModeRole::translation_x: return "translation-x";
    case ModeRole::translation_y: return "translation-y";
    case ModeRole::rotation: return "rotation";
    case ModeRole::scale: return "scale";
    case ModeRole::statistical: return "statistical";
    }
    return "statistical";
}

DivergenceClass divergence_class_from_string(std::string_view s) {
    if (s == "zero-div") return DivergenceClass::zero_div;
    if (s == "scale") return DivergenceClass::scale;
    if (s == "general") return DivergenceClass::general;
    throw Error("modes.invalid", "unknown divergence class '" + std::string(s) + "'");
}

ModeRole mode_role_from_string(std::string_view s) {
    if (s == "translation-x") return ModeRole::translation_x;
    if (s == "translation-y") return ModeRole::translation_y;
    if (s == "rotation") return ModeRole::rotation;
    if (s == "scale") return ModeRole::scale;
    if (s == "statistical") return ModeRole::statistical;
    throw Error("modes.invalid", "unknown mode role '" + std::string(s) + "'");
}

double Mode::max_norm() const {
    double m = 0.0;
    for (const Point2& d : displacements) m = std::max(m, norm(d));
    return m;
}

std::optional<std::size_t> ModeBasis::scale_index() const {
    for (std::size_t k = 0; k < modes.size(); ++k) {
        if (modes[k].role == ModeRole::scale) return k;
    }
    return std::nullopt;
}

void ModeBasis::validate(std::size_t template_size) const {
    if (sigma.size() != modes.size()) throw Error("modes.invalid", "sigma must have one entry per mode");
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw Error("modes.invalid", "gamma must be finite and >= 0");
    std::size_t scale_count = 0;
    bool seen_statistical = false;
    for (std::size_t k = 0; k < modes.size(); ++k) {
        const Mode& m = modes[k];
        if (m.displacements.size() != template_size) {
            throw Error("modes.invalid", "mode " + std::to_string(k) + " has the wrong number of displacements");
        }
        for (const Point2& d : m.displacements) {
            if (!is_finite(d)) throw Error("modes.invalid", "mode " + std::to_string(k) + " is not finite");
        }
        if (m.role == ModeRole::statistical) {
            seen_statistical = true;
            if (!(sigma[k] >= 0.0) || !std::isfinite(sigma[k])) {
                throw Error("modes.invalid", "sigma must be finite and >= 0 for mode " + std::to_string(k));
            }
        } else if (seen_statistical) {
            throw Error("modes.invalid", "geometric modes must precede statistical modes");
        }
        if (m.role == ModeRole::scale) ++scale_count;
    }
    if (scale_count > 1) throw Error("modes.invalid", "at most one scale mode is allowed");
}

ModeBasis ModeBasis::without_degenerate_modes() const {
    ModeBasis out;
    out.gamma = gamma;
    for (std::size_t k = 0; k < modes.size(); ++k) {
        if (modes[k].role == ModeRole::statistical && sigma[k] == 0.0) continue;
        out.modes.push_back(modes[k]);
        out.sigma.push_back(sigma[k]);
    }
    return out;
}

Point2 mass_centroid(const TemplateShape& tmpl) {
    Point2 c{};
    double total = 0.0;
    for (std::size_t k = 0; k < tmpl.size(); ++k) {
        c = c + tmpl.masses[k] * tmpl.points[k];
        total += tmpl.masses[k];
    }
    return total > 0.0 ? (1.0 / total) * c : c;
}

std::pair<Mode, Mode> make_translation_modes(const TemplateShape& tmpl) {
    if (tmpl.size() == 0) throw Error("template.invalid", "template has no points");
    Mode tx{std::vector<Point2>(tmpl.size(), Point2{1.0, 0.0}), DivergenceClass::zero_div, ModeRole::translation_x};
    Mode ty{std::vector<Point2>(tmpl.size(), Point2{0.0, 1.0}), DivergenceClass::zero_div, ModeRole::translation_y};
    return {std::move(tx), std::move(ty)};
}

Mode make_rotation_mode(const TemplateShape& tmpl) {
    const Point2 c = mass_centroid(tmpl);
    Mode m{{}, DivergenceClass::zero_div, ModeRole::rotation};
    m.displacements.reserve(tmpl.size());
    for (const Point2& p : tmpl.points) {
        const Point2 r = p - c;
        m.displacements.push_back({-r.y, r.x});
    }
    return m;
}

Mode make_scale_mode(const TemplateShape& tmpl) {
    const Point2 c = mass_centroid(tmpl);
    Mode m{{}, DivergenceClass::scale, ModeRole::scale};
    m.displacements.reserve(tmpl.size());
    for (const Point2& p : tmpl.points) m.displacements.push_back(p - c);
    return m;
}

ModeBasis geometric_basis(const TemplateShape& tmpl, bool with_scale) {
    ModeBasis b;
    auto [tx, ty] = make_translation_modes(tmpl);
    b.modes.push_back(std::move(tx));
    b.modes.push_back(std::move(ty));
    b.modes.push_back(make_rotation_mode(tmpl));
    if (with_scale) b.modes.push_back(make_scale_mode(tmpl));
    b.sigma.assign(b.modes.size(), 0.0);
    return b;
}

double scale_density_factor(double lambda_s) {
    if (!(lambda_s > -1.0)) throw Error("energy.invalid_scale", "scale coefficient must be > -1");
    return 1.0 / ((1.0 + lambda_s) * (1.0 + lambda_s));
}

std::vector<Point2> apply_transform(const TemplateShape& tmpl, const ModeBasis& basis,
                                    std::span<const double> lambda) {
    if (lambda.size() != basis.size()) throw Error("modes.length", "lambda length does not match the mode count");
    std::vector<Point2> out = tmpl.points;
    for (std::size_t k = 0; k < basis.size(); ++k) {
        const double l = lambda[k];
        if (l == 0.0) continue;
        const auto& d = basis.modes[k].displacements;
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i].x += l * d[i].x;
            out[i].y += l * d[i].y;
        }
    }
    return out;
}

double F_eval(const ModeBasis& basis, std::span<const double> lambda) {
    if (lambda.size() != basis.size()) throw Error("modes.length", "lambda length does not match the mode count");
    double s = 0.0;
    for (std::size_t k = 0; k < basis.size(); ++k) {
        if (!basis.is_statistical(k) || lambda[k] == 0.0) continue;
        if (basis.sigma[k] == 0.0) return std::numeric_limits<double>::infinity();
        const double z = lambda[k] / basis.sigma[k];
        s += z * z;
    }
    return 0.5 * basis.gamma * s;
}

} // namespace wmseg
