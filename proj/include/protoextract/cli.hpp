#pragma once

namespace protoextract {

/// Full command-line entry point; returns the process exit code.
/// 0 = success, 1 = usage or config error, 2 = runtime or numeric failure.
int run_cli(int argc, char** argv);

}  // namespace protoextract
