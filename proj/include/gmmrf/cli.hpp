#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "json.hpp"

namespace gmmrf::cli {

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;     // bad arguments, config, input files or I/O
inline constexpr int kExitNumerical = 3;  // numerical failure during a run
inline constexpr int kExitInternal = 1;   // anything else

/// Parses `gmmrf <command> [--config FILE] [--set key=value]...` and runs it.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Runs one command on an already-parsed config. Relative paths resolve
/// against `base_dir`. Throws on failure; `run` maps exceptions to exit codes.
void run_command(const std::string& command, const nlohmann::json& config, const std::filesystem::path& base_dir,
                 std::ostream& out);

/// The full config for `command`, every key present with its default.
/// Required keys default to null.
nlohmann::json default_config(const std::string& command);

}  // namespace gmmrf::cli
