#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace kpigen::cli {

inline constexpr const char* kVersion = "0.1.0";

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kDomainError = 1;
inline constexpr int kUsageError = 2;
inline constexpr int kBackendError = 3;

// Environment variable consulted when --backend-url is absent.
inline constexpr const char* kBackendEnv = "KPIGEN_BACKEND_URL";

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kpigen::cli
