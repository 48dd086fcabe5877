#include <fcntl.h>
#include <unistd.h>

#include "maskmatch/cli/app.hpp"
#include "maskmatch/common/error.hpp"
#include "maskmatch/common/text.hpp"

namespace maskmatch::cli {

namespace fs = std::filesystem;

RunDirectory::RunDirectory(const fs::path& dir, const std::string& frozen_config) : dir_(dir), lock_(dir / ".lock") {
    fs::create_directories(dir_);
    const int fd = ::open(lock_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        throw DataError("run directory " + dir_.string() + " is locked by another process (" + lock_.string() + ")");
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] const auto written = ::write(fd, pid.data(), pid.size());
    ::close(fd);
    try {
        const fs::path config = dir_ / "config.json";
        if (fs::exists(config)) {
            if (read_text_file(config) != frozen_config) {
                throw ConfigError("run directory " + dir_.string() + " already holds a different config.json");
            }
        } else {
            write_text_file(config, frozen_config);
        }
    } catch (...) {
        std::error_code ec;
        fs::remove(lock_, ec);
        throw;
    }
}

RunDirectory::~RunDirectory() {
    std::error_code ec;
    fs::remove(lock_, ec);
}

}  // namespace maskmatch::cli
