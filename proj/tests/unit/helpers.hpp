#pragma once

#include <filesystem>
#include <string>

#include "mindsets/error.hpp"

namespace testing {

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("mindsets_unit_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

template <typename F>
mindsets::Errc error_code(F&& f) {
  try {
    f();
  } catch (const mindsets::Error& e) {
    return e.code();
  }
  throw std::runtime_error("expected a mindsets::Error");
}

}  // namespace testing
