#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

#include "scenaug/scenario_io.hpp"

namespace test {

inline std::filesystem::path fixture(const std::string& rel) { return std::filesystem::path(SCENAUG_FIXTURES) / rel; }
inline std::filesystem::path data_file(const std::string& rel) { return std::filesystem::path(SCENAUG_DATA) / rel; }

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline scenaug::Scenario load(const std::string& name) {
  return scenaug::load_scenario_file(fixture("scenarios/" + name + ".json"));
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("scenaug_" + tag + "_" + std::to_string(std::hash<std::string>{}(tag + std::to_string(::getpid()))));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline constexpr const char* kSingleLaneInstruction =
    "add a parked vehicle in front of/in the travel direction of ego at an approx. distance 21.4m away from ego. "
    "Assume a slight offset (anything randomly between 0 to 1.5m) from lane center points as it is parked slightly "
    "towards the left lane boundary.";

}  // namespace test
