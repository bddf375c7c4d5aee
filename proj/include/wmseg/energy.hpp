#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "wmseg/graphcut.hpp"
#include "wmseg/measure.hpp"
#include "wmseg/modes.hpp"
#include "wmseg/transport.hpp"

namespace wmseg {

struct EnergyConfig {
    double tau = 1.0;
    double sigma_tv = 0.0;
    std::optional<double> gamma;        // overrides ModeBasis::gamma when set
    bool scale_enabled = true;          // apply the density factor of a scale mode
    bool rescale_tv_with_scale = false; // divide G by (1 + lambda_s)
    std::vector<double> g_background;   // empty means g = 0
    std::optional<double> radius;       // initial truncation radius
    std::size_t row_entries = 32;       // initial per-row cap on transport pairs (0 = no cap)

    void validate() const;
};

// Everything an energy evaluation needs, validated once.
class Problem {
  public:
    Problem(TemplateShape tmpl, ImageDomain image, ModeBasis basis, FeatureCost fcost, EnergyConfig config);

    const CostModel& model() const { return model_; }
    const EnergyConfig& config() const { return config_; }
    const TemplateShape& tmpl() const { return model_.tmpl(); }
    const ImageDomain& image() const { return model_.image(); }
    const ModeBasis& basis() const { return model_.basis(); }
    std::size_t mode_count() const { return model_.mode_count(); }

    // Index of the scale mode when the density factor is in effect.
    std::optional<std::size_t> scale_index() const { return scale_index_; }
    // (1 + lambda_s)^2, or 1 without an active scale mode. Throws Error("energy.invalid_scale").
    double mass_factor(std::span<const double> lambda) const;
    // Multiplier of G: 1 / (1 + lambda_s) when rescaling is enabled, else 1.
    double tv_factor(std::span<const double> lambda) const;
    double initial_radius() const;

    // Copy with a different TV weight.
    Problem with_sigma_tv(double sigma_tv) const;

  private:
    CostModel model_;
    EnergyConfig config_;
    std::optional<std::size_t> scale_index_;
};

struct TransportEnergy {
    double value = 0.0;
    Coupling plan;
    double objective = 0.0;  // transport cost before the 1/2 prefactor
    double radius = 0.0;     // truncation radius that certified the result
};

struct RelaxedEnergy {
    double value = 0.0;
    std::vector<std::uint8_t> labels;
    Segmentation segmentation;
    Coupling plan;  // each foreground image point matched to its nearest template point
};

// sum a_{yy'} |u(y) - u(y')|
double tv_G(std::span<const double> u, std::span<const Edge> adjacency);
double tv_G(const Segmentation& seg, const ImageDomain& domain);

// 1/2 kappa sum (c_geo + tau c_F(lambda) + g) pi + F(lambda) + sigma_tv G(Proj_Y pi),
// kappa = (1 + lambda_s)^-2 with an active scale mode and 1 otherwise.
double energy_Ehat(std::span<const double> lambda, const Coupling& pi, const Problem& problem);

// Exact transport energy at lambda (the scale-aware variant when a scale mode is active).
// Requires sigma_tv = 0; use Er1 for the graph-cut relaxation with TV.
TransportEnergy E1(std::span<const double> lambda, const Problem& problem);
// Lower bound of E1 over the box.
double E2(const LambdaBox& box, const Problem& problem);

// Scale-mode entry points; they require an active scale mode.
TransportEnergy Es1(std::span<const double> lambda, const Problem& problem);
double Es2b(const LambdaBox& box, const Problem& problem);

// Transport value of the same problem with supplies m * mu (no prefactor, no F).
double transport_value(std::span<const double> lambda, double mass_multiplier, const Problem& problem);

// min over template points of |T_lambda(x) - y_j|^2 + tau c_F + g_j
double c_min(std::size_t j, std::span<const double> lambda, const Problem& problem);

// min over u in {0,1}^Y of 1/2 kappa sum c_min m_y u_y + F(lambda) + sigma_tv G(u), by min-cut.
RelaxedEnergy Er1(std::span<const double> lambda, const Problem& problem);
// Lower bound of Er1 over the box.
double Er1_bound(const LambdaBox& box, const Problem& problem);

} // namespace wmseg
