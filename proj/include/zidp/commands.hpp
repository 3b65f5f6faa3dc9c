#ifndef ZIDP_COMMANDS_HPP
#define ZIDP_COMMANDS_HPP

// Subcommand drivers behind the zidp executable. Every command takes its
// options as a name -> value map, writes its outputs plus manifest.txt into
// args["out"], and throws zidp::Error on failure. The manifest records the
// command, its arguments, input digests, the effective configuration and
// output digests, so `rerun` can replay and verify it.

#include <map>
#include <ostream>
#include <string>

#include "zidp/error.hpp"

namespace zidp {

using ArgMap = std::map<std::string, std::string>;

void run_command(const std::string& command, const ArgMap& args, std::ostream& log);

// Process exit status for an error class.
int exit_code(ErrorKind kind) noexcept;

}  // namespace zidp

#endif  // ZIDP_COMMANDS_HPP
