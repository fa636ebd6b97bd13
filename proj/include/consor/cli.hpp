#pragma once

// `consor` command line: generate, train, eval, sweep, project.

#include <iosfwd>
#include <string>
#include <vector>

#include "consor/dataset.hpp"

namespace consor::cli {

enum ExitCode : int { kOk = 0, kRuntimeFailure = 1, kUsage = 2 };

/// Parses and runs one command. Never throws; failures become exit codes
/// with a diagnostic on `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// The first total/|schemas| training pairs of each schema present, in
/// dataset order. Throws Error(InvalidConfig) if total is not positive or
/// exceeds what the split holds.
std::vector<ScenePair> take_per_schema(const std::vector<ScenePair>& train, int total);

}  // namespace consor::cli
