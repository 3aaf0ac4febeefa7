#ifndef POINTGCN_TOOLS_CLI_HPP
#define POINTGCN_TOOLS_CLI_HPP

#include <ostream>

namespace pointgcn::cli {

inline constexpr int kUsageError = 1;
inline constexpr int kRuntimeError = 2;

/// Dispatches `synth`, `preprocess`, `train`, `eval` and `active`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pointgcn::cli

#endif  // POINTGCN_TOOLS_CLI_HPP
