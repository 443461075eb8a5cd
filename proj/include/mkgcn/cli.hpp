#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mkgcn::cli {

/// Runs one `mkgcn` invocation. args excludes the program name. Returns the
/// process exit code; diagnostics go to err, results to out.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mkgcn::cli
