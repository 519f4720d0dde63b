#pragma once

#include <string>
#include <vector>

namespace dflmoe {

/// Entry point behind the `dflmoe` binary; also callable from tests.
/// args excludes argv[0]. Exit codes: 0 success, 2 configuration error
/// (message names the field), 3 runtime error.
int cli_main(const std::vector<std::string>& args);

}  // namespace dflmoe
