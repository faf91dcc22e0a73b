#pragma once

#include <iosfwd>
#include <string>

#include "dsmt/config.hpp"

namespace dsmt {

// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
int run_cli(int argc, const char* const* argv);

// Subcommand bodies; they throw (ConfigError/DataError/NumericError) and
// run_cli maps exceptions onto exit codes.
void cmd_prepare(const RunConfig& cfg, std::ostream& out);
void cmd_train(const RunConfig& cfg, std::ostream& out);
void cmd_eval(const RunConfig& cfg, std::ostream& out);
void cmd_geometry(const RunConfig& cfg, std::ostream& out);
void cmd_attention(const RunConfig& cfg, std::ostream& out);

}  // namespace dsmt
