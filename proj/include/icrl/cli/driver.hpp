#pragma once

// Command-line driver.  `run_cli` parses a full argv-style argument list
// (excluding the program name), loads and validates the experiment config,
// and dispatches to the requested pipeline stage.
//
// Exit codes: 0 success, 2 configuration error (bad file, unknown key,
// invalid value, bad flags), 3 pipeline error (missing/stale artifacts,
// runtime failure), 4 verification suite reported a failing instance.

#include <string>
#include <vector>

namespace icrl::cli {

int run_cli(const std::vector<std::string>& args);

}  // namespace icrl::cli
