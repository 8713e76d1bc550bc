#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

namespace nco::cli {

struct Common {
  int threads = 0;  // 0 = all cores
  std::filesystem::path out = ".";
};

struct GenDataOptions {
  std::string kind = "uniform";
  int n = 10;
  std::uint64_t count = 1000;
  std::uint64_t seed = 1;
  std::string label = "heldkarp";
};

struct TrainOptions {
  std::optional<std::filesystem::path> config;
  std::string preset = "desk";  // desk | full
  std::filesystem::path data;
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
  int checkpoint_every = 0;
  std::optional<std::filesystem::path> resume;
};

struct EvalOptions {
  std::filesystem::path ckpt;
  std::optional<std::filesystem::path> data;
  std::optional<std::filesystem::path> tsplib;
  std::optional<double> optimum;
  std::string decode = "greedy";
  std::uint64_t seed = 0;
  std::optional<int> n_train;
  bool no_log_n = false;
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> limit;
};

struct FitOptions {
  std::optional<std::filesystem::path> records;
  std::string form = "N";
  std::optional<std::string> method;
  std::string group_by = "none";
  std::optional<int> depth;
  std::optional<int> width;
  std::optional<std::string> decode;
};

struct AnalyzeOptions {
  std::string report = "longsight";
  std::optional<std::filesystem::path> ckpt;
  std::optional<std::filesystem::path> data;
  std::optional<int> n_train;
  std::string policy = "model";
  int k = 10;
  std::uint64_t instance = 0;
  std::optional<int> step;
  std::optional<std::uint64_t> limit;
  std::optional<int> depth;
  std::optional<int> width;
  int n = 100;
  int beam = 1;
};

/// Each command writes its artifacts and a manifest into common.out and
/// returns the one-line summary.
nlohmann::json gen_data(const Common& common, const GenDataOptions& o);
nlohmann::json train(const Common& common, const TrainOptions& o);
nlohmann::json eval(const Common& common, const EvalOptions& o);
nlohmann::json fit_scaling(const Common& common, const FitOptions& o);
nlohmann::json analyze(const Common& common, const AnalyzeOptions& o);

/// Dataset file for a path that is either the file or a gen-data output directory.
std::filesystem::path dataset_path(const std::filesystem::path& p);

}  // namespace nco::cli
