#include "manifest.hpp"

#include "tprobe/config/run_config.hpp"
#include "tprobe/core/digest.hpp"
#include "tprobe/core/table_io.hpp"
#include "tprobe/remote/client.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <fmt/format.h>

namespace tprobe::cli {

namespace {

nlohmann::json library_versions() {
  return {{"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
          {"fmt", fmt::format("{}.{}.{}", FMT_VERSION / 10000, FMT_VERSION / 100 % 100, FMT_VERSION % 100)},
          {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR,
                                        NLOHMANN_JSON_VERSION_PATCH)},
          {"cli11", CLI11_VERSION},
          {"httplib", http_client_version()}};
}

}  // namespace

void write_manifest(const std::filesystem::path& out_dir, const Manifest& m) {
  nlohmann::json inputs = nlohmann::json::array();
  for (const auto& p : m.inputs) {
    inputs.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
  }
  nlohmann::json outputs = nlohmann::json::array();
  for (const auto& name : m.outputs) {
    outputs.push_back({{"path", name}, {"sha256", sha256_file(out_dir / name)}});
  }
  nlohmann::json j = {{"tool", "tprobe"},
                      {"version", TPROBE_VERSION},
                      {"command", m.command},
                      {"args", m.args},
                      {"inputs", inputs},
                      {"outputs", outputs},
                      {"libraries", library_versions()}};
  if (!m.config.is_null()) {
    j["config"] = m.config;
    j["config_digest"] = sha256_hex(m.config.dump());
    j["schema_version"] = kRunConfigSchema;
  }
  write_file_atomic(out_dir / "manifest.json", j.dump(2) + "\n");
}

void write_error_record(const std::filesystem::path& out_dir, const std::string& command, const std::string& kind,
                        const std::string& message) {
  const nlohmann::json j = {{"command", command}, {"kind", kind}, {"message", message}};
  write_file_atomic(out_dir / "error.json", j.dump(2) + "\n");
}

}  // namespace tprobe::cli
