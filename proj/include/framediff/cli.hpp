#pragma once

namespace framediff {

// Parses argv and dispatches to the subcommands. Returns the process exit
// code: 0 success, 2 input validation, 3 numeric failure, 4 resource.
int run_cli(int argc, char** argv);

}  // namespace framediff
