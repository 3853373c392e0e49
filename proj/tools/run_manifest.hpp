#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace fasb::cli {

// Provenance record written next to every command output.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  // Relative paths in argv resolve against this directory on replay.
  std::string working_dir = std::filesystem::current_path().string();
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json seeds = nlohmann::json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::chrono::system_clock::time_point started = std::chrono::system_clock::now();

  // Stamps the end time and writes the manifest as JSON.
  void write(const std::string& path) const;
  static RunManifest load(const std::string& path);
};

std::string iso8601(std::chrono::system_clock::time_point t);

}  // namespace fasb::cli
