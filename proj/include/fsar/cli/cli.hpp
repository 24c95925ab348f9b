#ifndef FSAR_CLI_CLI_HPP
#define FSAR_CLI_CLI_HPP

#include <string>
#include <vector>

namespace fsar::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

/// Entry point of the `fsar` tool. Returns 0 on success, 1 on validation or
/// configuration errors, 2 on runtime failures.
int run(int argc, const char* const* argv);

/// Convenience overload; argv[0] is supplied.
int run(const std::vector<std::string>& args);

}  // namespace fsar::cli

#endif  // FSAR_CLI_CLI_HPP
