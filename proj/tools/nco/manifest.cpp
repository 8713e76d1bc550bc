#include "manifest.hpp"

#include <ctime>
#include <fstream>

#include <fmt/format.h>

#include "nco/error.hpp"

namespace nco::cli {

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const nlohmann::json& config) { return fmt::format("{:016x}", fnv1a(config.dump())); }

std::string iso_timestamp(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json RunManifest::to_json() const {
  nlohmann::json j;
  j["command"] = command;
  j["config"] = config;
  j["config_hash"] = config_hash(config);
  j["seed"] = seed;
  j["git_describe"] = git_describe;
  j["started_at"] = iso_timestamp(started);
  j["finished_at"] = iso_timestamp(finished);
  j["outputs"] = nlohmann::json::array();
  for (const auto& p : outputs) j["outputs"].push_back(p.filename().string());
  for (const auto& [k, v] : extra.items()) j[k] = v;
  return j;
}

std::filesystem::path write_manifest(const std::filesystem::path& dir, const RunManifest& manifest) {
  const auto path = dir / "manifest.json";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  out << manifest.to_json().dump(2) << '\n';
  return path;
}

nlohmann::json read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) return nullptr;
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("malformed manifest '{}': {}", path.string(), e.what()));
  }
}

}  // namespace nco::cli
