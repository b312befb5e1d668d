#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

namespace nslab {

inline constexpr const char* tool_version = "0.1.0";

enum ExitCode : int { exit_ok = 0, exit_error = 1, exit_warnings = 2, exit_hormander_fail = 3 };

struct CliOptions {
    std::string command;
    std::filesystem::path config;
    std::filesystem::path out;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> strategy;
    std::string system; ///< hormander-check: built-in name or system file
    int depth = 3;
    int samples = 100;
    double half_width = 1.0;
};

/// --threads wins over SOLVER_THREADS; 1 when neither is set.
int resolve_threads(std::optional<int> flag);

int cmd_run(const CliOptions& opt, std::ostream& log);
int cmd_contraction_audit(const CliOptions& opt, std::ostream& log);
int cmd_density_probe(const CliOptions& opt, std::ostream& log);
int cmd_hormander_check(const CliOptions& opt, std::ostream& log);
int cmd_decay_audit(const CliOptions& opt, std::ostream& log);

/// Parses the command line, dispatches and maps exceptions to exit codes.
int run_cli(int argc, char** argv);

} // namespace nslab
