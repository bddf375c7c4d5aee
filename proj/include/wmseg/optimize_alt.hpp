#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wmseg/energy.hpp"

namespace wmseg {

enum class Backend { transport, graphcut };

std::string_view to_string(Backend b);
Backend backend_from_string(std::string_view s);

struct AltOptions {
    Backend backend = Backend::transport;
    std::size_t max_iters = 100;
    double tol = 1e-7;
    // Coefficients marked true keep their initial value.
    std::vector<bool> frozen;
    // Search interval and resolution of the scale coefficient.
    double scale_lower = -0.5;
    double scale_upper = 1.0;
    double scale_width = 1e-3;
};

struct TraceRow {
    std::size_t iteration = 0;
    std::string step;  // "pi" or "lambda"
    std::vector<double> lambda;
    double energy = 0.0;
    Backend backend = Backend::transport;
};

struct AltResult {
    std::vector<double> lambda;
    double energy = 0.0;
    Coupling plan;
    Segmentation segmentation;
    std::vector<TraceRow> trace;
    std::size_t iterations = 0;
    bool converged = false;
};

// Exact minimizer over the non-frozen, non-scale coefficients of
// 1/2 kappa sum pi_ij (|x_i + A_i lambda - y_j|^2 + tau sum_k lambda_k c_{F,k}(i,j)) + F(lambda),
// solving the normal equations with the minimum-norm solution when singular.
std::vector<double> lambda_step(const Coupling& pi, std::span<const double> lambda, const Problem& problem,
                                const std::vector<bool>& frozen = {});

// Alternates the plan step (exact transport or graph-cut relaxation, with a 1-D
// branch-and-bound over the scale coefficient when a scale mode is active) and
// the lambda step until the energy decrease drops below tol.
AltResult alternating_optimize(std::span<const double> initial_lambda, const Problem& problem,
                               const AltOptions& options = {});

} // namespace wmseg
