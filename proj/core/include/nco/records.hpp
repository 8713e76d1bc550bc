#pragma once

// Evaluation records, bundled fixture tables, and fit reports built from them.
//
// EvalRecord CSV columns, in order:
//   depth,width,heads,qkv_dim,ffn_dim,params,decode,dataset,n,instances,
//   mean_gap,wall_seconds,gflops,samples

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "nco/model.hpp"
#include "nco/scaling.hpp"

namespace nco::records {

struct EvalRecord {
  model::ModelConfig config;
  std::int64_t params = 0;
  std::string decode = "greedy";
  std::string dataset;
  int n = 0;
  int instances = 0;
  double mean_gap = 0.0;      // percent
  double wall_seconds = 0.0;  // whole instance set
  double gflops = 0.0;        // per solution
  double samples = 0.0;       // training samples seen

  void validate() const;
};

inline constexpr std::string_view kEvalCsvHeader =
    "depth,width,heads,qkv_dim,ffn_dim,params,decode,dataset,n,instances,mean_gap,wall_seconds,gflops,"
    "samples";

void write_eval_csv(std::ostream& out, const std::vector<EvalRecord>& rows);

/// Reads either the EvalRecord schema or one of the bundled fixture schemas
/// (table9: depth,width,gap_pct,time_min; table13: depth,width,beam,gap_pct).
/// Fixture rows become TSP100 greedy/beam records of the grid models trained
/// on 60000 x 1024 samples.
std::vector<EvalRecord> read_eval_csv(std::istream& in);
std::vector<EvalRecord> read_eval_csv(const std::filesystem::path& path);

// --- fixtures ---------------------------------------------------------------

/// NCO_FIXTURE_DIR when set, else `fallback`.
std::filesystem::path fixture_dir(const std::filesystem::path& fallback);

struct Table1Row {
  int depth = 0, width = 0, heads = 0, qkv_dim = 0, ffn_dim = 0;
  double params_millions = 0.0;
};
struct Table9Row {
  int depth = 0, width = 0;
  double gap = 0.0;         // percent
  double time_minutes = 0.0;
};
struct Table12Row {
  int depth = 0, width = 0, n = 0;
  std::string decode;
  double gflops = 0.0;
};
struct Table13Row {
  int depth = 0, width = 0, beam = 0;
  double gap = 0.0;  // percent
};

std::vector<Table1Row> load_table1(const std::filesystem::path& dir);
std::vector<Table9Row> load_table9(const std::filesystem::path& dir);
std::vector<Table12Row> load_table12(const std::filesystem::path& dir);
std::vector<Table13Row> load_table13(const std::filesystem::path& dir);

/// Rows of a small CSV file keyed by header name.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;
  bool has(std::string_view name) const;
};
CsvTable read_csv(std::istream& in);
CsvTable read_csv(const std::filesystem::path& path);

// --- fit reports ------------------------------------------------------------

enum class FitForm { kParams, kSamples, kCompute, kDepthWidth, kParamsRatio, kTime };
FitForm parse_fit_form(std::string_view text);  // N | S | C | WD | NA | time
std::string_view to_string(FitForm form);

struct RecordFilter {
  std::optional<int> depth;
  std::optional<int> width;
  std::optional<std::string> decode;

  bool accepts(const EvalRecord& r) const;
};

enum class GroupBy { kNone, kDepth, kWidth };
GroupBy parse_group_by(std::string_view text);  // none | depth | width

struct CurveFit {
  std::string label;
  std::vector<scaling::XY> points;    // univariate forms
  std::vector<scaling::XYZ> points2;  // bivariate forms
  std::optional<scaling::PowerLawFit> power;
  std::optional<scaling::BivariateFit> bivariate;
  std::optional<scaling::ShiftedFit> shifted;
};

struct FitReport {
  FitForm form = FitForm::kParams;
  scaling::FitMethod method = scaling::FitMethod::kGapSpace;
  std::vector<CurveFit> curves;
  double param_constant = 0.0;  // c in N ~ c D W^2, for the NA form
  int skipped_nonpositive = 0;  // records with gap <= 0, which no power law can fit
};

/// x for each univariate form: N -> params, S -> samples, C -> gflops,
/// time -> wall_seconds / 60 (minutes, shifted law). Bivariate forms use
/// (depth, width) or (params, depth / width). Bivariate fits default to the
/// log-linear method; univariate power fits to gap-space least squares.
/// Records with a nonpositive gap are counted and left out.
FitReport fit_records(const std::vector<EvalRecord>& records, FitForm form,
                      std::optional<scaling::FitMethod> method, const RecordFilter& filter,
                      GroupBy group_by);

nlohmann::json to_json(const FitReport& report);

}  // namespace nco::records
