#ifndef PEGAN_CLI_HPP
#define PEGAN_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include "pegan/errors.hpp"

namespace pegan {

/// 0 success, 1 usage or configuration, 2 data or I/O, 3 numeric failure.
int exit_code_for(ErrorKind kind);

/// Runs one `pegan` subcommand. args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pegan

#endif  // PEGAN_CLI_HPP
