#pragma once

#include "nslab/control.hpp"
#include "nslab/picard.hpp"
#include "nslab/semigroup.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace nslab {

enum class RhoMode { bound, one_over_l, fixed };

std::string to_string(RhoMode m);
RhoMode rho_mode_from_string(const std::string& s);

struct RhoSchedule {
    RhoMode mode = RhoMode::bound;
    /// bound: multiplier of the step-size bound; one_over_l: c in c / l;
    /// fixed: rho itself.
    double value = 1.0;
};

/// Constants entering the step-size bound; zero means "estimate".
struct SchemeConstants {
    double C_B = 0.0; ///< estimate_CB(sys, domain, 2)
    double C_G = 1.0;
    double C_K = 0.0; ///< estimate_CK on a box, 1 on the torus
    double c_n = 1.0;
};

struct SchemeConfig {
    HormanderSystem sys = HormanderSystem::classical(2, 0.1);
    Domain domain;
    Field initial;
    int steps = 1;
    RhoSchedule rho;
    Strategy strategy = Strategy::none;
    double C = 4.0;
    InitialControl r0 = InitialControl::zero;
    double tol = 1e-10;
    int kmax = 20;
    double q = 6.0;              ///< decay order of the data budget
    double decay_constant = 1.0; ///< C-bar of the degenerate control weight
    std::uint64_t seed = 0;
    Backend backend = Backend::spectral;
    SchemeConstants constants;
    int samples = 7;             ///< time nodes per step
    bool store_samples = false;  ///< keep the interior nodes of every step

    /// Throws std::invalid_argument on inconsistent settings.
    void validate() const;
};

struct StepReport {
    int l = 0;
    double rho = 0.0;
    double bound_rho = 0.0;
    double C_prev = 0.0;
    double t = 0.0; ///< original time at the end of the step
    double divergence_linf = -1.0; ///< torus only; -1 elsewhere
    ContractionRecord contraction;
    std::vector<Field> samples; ///< interior nodes (store_samples)

    nlohmann::json to_json() const;
};

struct Trajectory {
    std::vector<double> t;
    std::vector<Field> v_controlled;
    std::vector<Field> r;
    std::vector<Field> v;
    std::vector<StepReport> reports;
    std::vector<LedgerEntry> ledger;
    std::vector<std::string> warnings;
    bool aborted = false;
    std::string abort_reason;
    double C_B = 0.0, C_K = 0.0, c_sum = 0.0;

    std::size_t steps() const { return reports.size(); }
    /// max over steps of |v - (v_controlled - r)|_inf.
    double reconstruction_error() const;
    nlohmann::json report() const;
};

/// Called after each converged step with the local state and its report.
using StepObserver = std::function<void(const LocalState&, const StepReport&)>;

/// The step loop. Picard failures stop the run and return the partial
/// trajectory with `aborted` set.
Trajectory run_global(const SchemeConfig& cfg, const StepObserver& observer = {});

/// Initial data as used by the scheme (projected on the torus).
Field prepare_initial(const SchemeConfig& cfg);

/// C^{l-1} proxy: max(1, |data|_{H2} * (box ? weighted sup_q : 1)).
double decay_constant_proxy(const Field& data, double q);

struct BudgetCheck {
    int n = 0;
    double q = 0.0;
    double m_exp = 0.0;
    double n_exp = 0.0;
    double theorem_threshold = 0.0; ///< max(n_exp, 3 m_exp) + 2n + 2
    double lemma_threshold = 0.0;   ///< max(n_exp, m_exp) + n + 1
    bool theorem_pass = false;
    bool lemma_pass = false;
    double theorem_margin = 0.0; ///< q - threshold
    double lemma_margin = 0.0;

    nlohmann::json to_json() const;
};

BudgetCheck decay_budget_check(int n, double q, double m_exp, double n_exp);
BudgetCheck decay_budget_check(const SchemeConfig& cfg, const KSEnvelope& envelope);

struct TimeSample {
    double t = 0.0;
    Field v;
};

/// (t_l, v(t_l)) with t_l the running sum of rho and v = v_controlled - r.
std::vector<TimeSample> export_original_time(const Trajectory& traj);

/// Snapshots v_0000.bin/json ... plus times.txt under `dir`; read back with
/// import_time_series.
void write_time_series(const std::filesystem::path& dir, const std::vector<TimeSample>& series);
std::vector<TimeSample> import_time_series(const std::filesystem::path& dir);

} // namespace nslab
