#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace onecast::cli {

enum ExitCode : int {
    kOk = 0,
    kCheckFailed = 1,
    kConfigError = 2,
    kDataError = 3,
    kDivergence = 4,
};

/// Entry point of the `onecast` tool. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace onecast::cli
