#pragma once

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace tprobe::cli {

/// Run record written next to every command's outputs. Holds no
/// timestamps or host details, so identical runs give identical manifests.
struct Manifest {
  std::string command;
  nlohmann::json args = nlohmann::json::object();
  nlohmann::json config;  // resolved config, or null
  std::vector<std::filesystem::path> inputs;
  std::vector<std::string> outputs;  // names inside the output directory
};

void write_manifest(const std::filesystem::path& out_dir, const Manifest& m);

/// error.json with the error kind and message.
void write_error_record(const std::filesystem::path& out_dir, const std::string& command, const std::string& kind,
                        const std::string& message);

}  // namespace tprobe::cli
