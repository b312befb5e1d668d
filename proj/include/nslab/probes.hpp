#pragma once

#include "nslab/diagnostics.hpp"
#include "nslab/scheme.hpp"
#include "nslab/semigroup.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace nslab {

struct DensityCheck {
    std::string oracle;
    double sup_rel_error = 0.0;
    std::size_t points = 0; ///< grid points inside the region
    double region = 0.0;

    nlohmann::json to_json() const;
};

/// Sup relative error against N(x0, variance I) over the ball of radius
/// `sigmas` standard deviations.
DensityCheck gaussian_density_check(const DensityEstimate& est, double variance, double sigmas);

/// Sup relative error against the closed-form Kolmogorov kernel over the
/// bulk region {Mahalanobis distance <= mahalanobis}.
DensityCheck kolmogorov_density_check(const DensityEstimate& est, double mahalanobis);

struct IncrementDecay {
    int k = 0;
    bool zero = false;
    std::optional<DecayFit> fit;
    std::string error;
};

struct DecayAudit {
    double q = 0.0;
    double tolerance = 0.0;
    double threshold = 0.0; ///< min(q, q_hat(data)) - tolerance
    IncrementDecay data;
    std::vector<IncrementDecay> increments; ///< k = 1, 2, ...
    bool pass = false;
    ContractionRecord contraction;

    nlohmann::json to_json() const;
};

/// One box step from cfg.initial; fits the decay order of the data and of
/// every end-of-step increment. Passes when each delta v^k, k >= 2, has
/// q_hat >= threshold (zero fields pass trivially).
DecayAudit decay_audit(const SchemeConfig& cfg, const std::vector<int>& orders, double tolerance);

} // namespace nslab
