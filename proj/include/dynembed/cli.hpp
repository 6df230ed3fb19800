#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dynembed {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitThreshold = 3;

// Entry point of the `dynembed` tool. `args` excludes the program name.
// Subcommands: simulate, ingest, embed, stability, cluster, theory,
// consistency, clt, digest.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string version_string();

}  // namespace dynembed
