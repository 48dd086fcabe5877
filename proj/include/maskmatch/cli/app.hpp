#pragma once

#include <filesystem>
#include <string>

namespace maskmatch::cli {

enum ExitCode : int { kSuccess = 0, kUsage = 1, kDataFailure = 2, kRunFailure = 3 };

// Entry point of the maskmatch binary.
int run(int argc, const char* const* argv);

// Exclusive, config-frozen output directory. The constructor takes
// <dir>/.lock (DataError when held) and writes <dir>/config.json, or checks
// that an existing copy is byte-identical (ConfigError otherwise).
class RunDirectory {
public:
    RunDirectory(const std::filesystem::path& dir, const std::string& frozen_config);
    ~RunDirectory();
    RunDirectory(const RunDirectory&) = delete;
    RunDirectory& operator=(const RunDirectory&) = delete;

    const std::filesystem::path& path() const { return dir_; }

private:
    std::filesystem::path dir_;
    std::filesystem::path lock_;
};

}  // namespace maskmatch::cli
