#pragma once

#include "nslab/grid.hpp"
#include "nslab/picard.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace nslab {

struct DecayFit {
    double q_hat = 0.0;
    bool saturated = false; ///< decays faster than any resolvable power; q_hat = q_max
    std::vector<double> radii;
    std::vector<double> sups;
    std::size_t fitted_shells = 0;
    double r2 = 0.0;
};

struct DecayOptions {
    double shell_factor = 1.3;
    double r_min = 0.0;  ///< 0: four grid spacings
    double q_max = 50.0;
};

/// Sup of max_{|alpha| in orders} |D^alpha f| over shells r <= |x| < 1.3 r inside
/// the box; q_hat = -slope of log sup against log r over the outer half of
/// the usable shells. Throws std::runtime_error("insufficient shells").
DecayFit decay_order(const Field& f, const std::vector<int>& derivative_orders, const DecayOptions& opt = {});

struct ContractionSummary {
    bool ratios_le_half = true;
    bool first_increment_le_quarter = true;
    double l_trend_slope = 0.0; ///< log-log slope of the k = 2 ratio against l
    double l_trend_r2 = 0.0;
    bool has_trend = false;
    std::vector<std::string> violations;

    nlohmann::json to_json() const;
};

struct ContractionTable {
    std::string csv; ///< l,k,rho,bound_rho,norm_h2,norm_h4,ratio
    ContractionSummary summary;
};

ContractionTable contraction_table(const std::vector<ContractionRecord>& records);

enum class GrowthModel { linear, sqrt, constant };

std::string to_string(GrowthModel m);

struct GrowthFit {
    GrowthModel model = GrowthModel::linear;
    double a = 0.0; ///< coefficient of g(x); the mean for the constant model
    double b = 0.0;
    double r2 = 0.0;
    double ci_low = 0.0; ///< 95% interval on a
    double ci_high = 0.0;

    nlohmann::json to_json() const;
};

/// y = a g(x) + b with g(x) = x or sqrt(x); the constant model fits y = a.
GrowthFit growth_regression(const std::vector<double>& xs, const std::vector<double>& ys, GrowthModel model);

/// Two-sided 97.5% Student-t quantile (Cornish-Fisher expansion).
double student_t975(int dof);

} // namespace nslab
