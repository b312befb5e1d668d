#pragma once

#include "nslab/diagnostics.hpp"
#include "nslab/grid.hpp"
#include "nslab/picard.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace nslab {

enum class Strategy { none, i, ia, ii, iii, iv, v };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);
/// Strategies whose increment starts with -delta v^1.
bool needs_first_increment(Strategy s);

/// Growth law the controlled function is expected to follow.
enum class GrowthLaw { sqrt, uniform };
GrowthLaw expected_law(Strategy s);

struct LedgerEntry {
    int l = 0;
    double rho = 0.0;
    double r_linf = 0.0;
    double r_h2 = 0.0;
    double vr_h2 = 0.0;
    double v_h2 = 0.0;
};

std::string ledger_csv(const std::vector<LedgerEntry>& ledger);
nlohmann::json ledger_json(const std::vector<LedgerEntry>& ledger);

struct ControlState {
    Strategy strategy = Strategy::none;
    double C = 4.0;
    Field r;
    std::vector<LedgerEntry> ledger;
};

enum class InitialControl { zero, h_over_C };

/// r^0 = 0 or h / C. Throws unless C > 1.
ControlState make_control_state(Strategy strategy, double C, const Field& h,
                                InitialControl r0 = InitialControl::zero);

struct ControlContext {
    const LocalSolver* solver = nullptr;
    const LocalState* state = nullptr;
    std::optional<Field> delta_v1; ///< delta v^1 at tau = l; taken from state when absent
    Field r_prev;
    double C = 4.0;
    double q = 6.0;              ///< decay order of the degenerate weight
    double decay_constant = 1.0; ///< C-bar in 2 C-bar / (1 + |y|^q)
};

/// The control increment delta r^l at tau = l.
Field control_increment(Strategy strategy, const ControlContext& ctx);

/// int_0^1 S(rho (1 - s)) phi ds (frozen source), with the degenerate
/// weight 2 C-bar / (1 + |y|^q) applied first when the system is not a heat system.
Field control_duhamel(const ControlContext& ctx, const Field& phi);

struct ControlledStep {
    Field v_controlled;
    Field r_new;
};

/// v_controlled = solution + delta_r, r_new = r + delta_r; appends a ledger row.
ControlledStep apply_control(const LocalState& state, ControlState& ctrl, const Field& delta_r);

struct GrowthReport {
    Strategy strategy = Strategy::none;
    GrowthLaw law = GrowthLaw::sqrt;
    GrowthFit r_fit;
    GrowthFit vr_fit;
    double r2_threshold_r = 0.95;
    double r2_threshold_vr = 0.9;
    double uniform_factor = 1.25;
    double vr_reference = 0.0; ///< |v^r|_{H2} at step 5 (uniform law)
    double vr_max = 0.0;
    bool r_pass = false;
    bool vr_pass = false;
    bool pass = false;

    nlohmann::json to_json() const;
};

/// Fits |r|_inf against l (linear) and |v^r|_{H2} against l (sqrt or
/// bounded per the strategy). The r law only gates the sqrt-law
/// strategies. Needs at least 10 entries.
GrowthReport growth_ledger_check(const std::vector<LedgerEntry>& ledger, Strategy strategy);

} // namespace nslab
