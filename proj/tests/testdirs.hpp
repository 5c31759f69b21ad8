#pragma once

#include <filesystem>
#include <string>

namespace testdirs {

/// Empty scratch directory under the build tree's test area.
inline std::filesystem::path fresh(const std::string& name) {
    const auto dir = std::filesystem::path(GRIDAD_TEST_TMP) / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testdirs
