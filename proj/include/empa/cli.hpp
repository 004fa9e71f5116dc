#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace empa {

// Exit status: 0 success, 1 usage or input error, 2 runtime fault or deadlock.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUser = 1;
inline constexpr int kExitFault = 2;

// `args` excludes the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace empa
