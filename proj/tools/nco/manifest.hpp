#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace nco::cli {

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);

/// Hash of config.dump(), as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

std::string iso_timestamp(std::chrono::system_clock::time_point t);

struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::string git_describe;
  std::chrono::system_clock::time_point started;
  std::chrono::system_clock::time_point finished;
  std::vector<std::filesystem::path> outputs;
  nlohmann::json extra = nlohmann::json::object();

  nlohmann::json to_json() const;
};

/// Writes manifest.json into `dir`, replacing any earlier one.
std::filesystem::path write_manifest(const std::filesystem::path& dir, const RunManifest& manifest);

/// Reads manifest.json from `dir`; null when absent.
nlohmann::json read_manifest(const std::filesystem::path& dir);

}  // namespace nco::cli
