#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace advlab::cli {

enum ExitCode : int {
  kOk = 0,
  kVerificationFailed = 1,
  kUsageError = 2,
  kIoError = 3,
};

/// Entry point shared by the `advlab` binary and the tests. `args` excludes
/// the program name: `{"attack", "--model", "m.txt", ...}`.
///
/// Every command writes `<out>/manifest`, a `key = value` file holding the
/// fully resolved configuration; `advlab <command> --config <out>/manifest`
/// reproduces the run (command-line flags override manifest values).
[[nodiscard]] int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace advlab::cli
