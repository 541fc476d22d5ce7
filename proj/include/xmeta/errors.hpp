#pragma once

#include <stdexcept>

namespace xmeta {

// Exit-code contract for the CLI: 0 success, 2 config error, 3 data error,
// 4 numeric failure (NaN/Inf detected).
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace xmeta
