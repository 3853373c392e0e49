#include "run_manifest.hpp"

#include <ctime>
#include <fstream>

#include "fasb/common/binary_io.hpp"
#include "fasb/common/error.hpp"

#ifndef FASB_VERSION
#define FASB_VERSION "unknown"
#endif

namespace fasb::cli {

std::string iso8601(std::chrono::system_clock::time_point t) {
  const std::time_t secs = std::chrono::system_clock::to_time_t(t);
  std::tm utc{};
  gmtime_r(&secs, &utc);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
  return buf;
}

void RunManifest::write(const std::string& path) const {
  const nlohmann::json j{{"command", command},
                         {"argv", argv},
                         {"working_dir", working_dir},
                         {"config", config},
                         {"seeds", seeds},
                         {"inputs", inputs},
                         {"outputs", outputs},
                         {"tool_version", FASB_VERSION},
                         {"started_at", iso8601(started)},
                         {"finished_at", iso8601(std::chrono::system_clock::now())}};
  io::write_file(path, j.dump(2) + "\n");
}

RunManifest RunManifest::load(const std::string& path) {
  try {
    const auto j = nlohmann::json::parse(io::read_file(path));
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.argv = j.at("argv").get<std::vector<std::string>>();
    m.working_dir = j.value("working_dir", std::string("."));
    m.config = j.value("config", nlohmann::json::object());
    m.seeds = j.value("seeds", nlohmann::json::object());
    m.inputs = j.value("inputs", std::vector<std::string>{});
    m.outputs = j.value("outputs", std::vector<std::string>{});
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail("invalid_manifest", path + ": " + e.what());
  }
}

}  // namespace fasb::cli
