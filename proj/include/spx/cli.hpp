#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace spx {

/// Entry point behind the `spx` executable. `args` excludes the program
/// name. Returns 0 on success, otherwise the ErrorCategory code after writing
/// a single `error[<category>]: <detail>` line to `err`.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spx
