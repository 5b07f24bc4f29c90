#pragma once

namespace prlstm::cli {

// Full command-line entry point; returns the process exit code.
// 0 success, 2 config error, 3 divergence, 4 resource exhaustion.
int cli_main(int argc, char** argv);

}  // namespace prlstm::cli
