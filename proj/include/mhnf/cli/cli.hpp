// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mhnf::cli {

/// Runs one command (`train`, `eval`, `inspect`, `sweep`, `synth`).
/// `args` excludes the program name. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mhnf::cli
