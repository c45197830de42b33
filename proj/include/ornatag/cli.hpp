#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace ornatag {

inline constexpr std::string_view kToolVersion = "0.1.0";

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitInput = 2,
    kExitRuntime = 3,
};

// `key=value` configuration file shared by the subcommands. Recognized keys:
// epochs, step_size, l2, batch, seed, h1, h2. Command-line flags take
// precedence over file values, which take precedence over defaults.
struct CliConfig {
    std::map<std::string, std::string> values;

    std::optional<double> real(const std::string& key) const;
    std::optional<long long> integer(const std::string& key) const;
};

// Throws Error (SyntaxError / InvalidArgument) on malformed lines or unknown keys.
CliConfig parse_cli_config(std::string_view text);

// Entry point of the `ornatag` tool. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ornatag
