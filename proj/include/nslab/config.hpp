#pragma once

#include "nslab/scheme.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nslab {

/// Malformed configuration; the message names the offending field path.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& path, const std::string& what)
        : std::runtime_error(path + ": " + what), path_(path)
    {
    }
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

inline constexpr int config_schema_version = 1;

struct InitialSpec {
    std::string type = "zero"; ///< zero | taylor_green | random_divfree | swirl_ring | snapshot
    double amplitude = 1.0;
    int kmax = 4;
    std::uint64_t seed = 7;
    double q = 6.0;
    double radius = 1.5;
    std::filesystem::path path;
};

struct DensitySpec {
    HormanderSystem sys = HormanderSystem::builtin("laplacian", 2, 0.5);
    std::vector<double> x0;
    double tau = 1.0;
    int N = 100000;
    int steps = 256;
    std::vector<int> grid_shape;
    std::vector<double> grid_half_width;
    std::optional<double> bandwidth;
    std::string oracle = "none"; ///< none | gaussian | kolmogorov
    double region = 2.0;         ///< ball radius in standard deviations (Mahalanobis for kolmogorov)
    double tolerance = 0.05;
};

struct EnvelopeSpec {
    bool fit = false;
    std::vector<double> taus;
    std::vector<std::vector<double>> base_points;
    int N = 100000;
    int steps = 256;
    int grid_points = 64;
    std::optional<double> m_exp; ///< hand-fed exponents
    std::optional<double> n_exp;
};

struct DecaySpec {
    std::vector<int> orders{0, 1, 2};
    double tolerance = 0.5;
};

struct RunConfig {
    nlohmann::json source; ///< the parsed document, with command-line overrides applied
    std::filesystem::path base_dir;
    SchemeConfig scheme;
    InitialSpec initial;
    std::string oracle = "none"; ///< none | taylor_green
    std::optional<DensitySpec> density;
    std::optional<EnvelopeSpec> envelope;
    DecaySpec decay;
    std::uint64_t seed = 0;
};

/// Parses and validates a configuration document. Unknown keys are errors.
RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig parse_config_text(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

/// Re-applies a seed or strategy override.
void override_seed(RunConfig& cfg, std::uint64_t seed);
void override_strategy(RunConfig& cfg, const std::string& strategy);

Field build_initial(const InitialSpec& spec, const Domain& domain, double nu);

} // namespace nslab
