#include "nco/records.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "nco/error.hpp"

namespace nco::records {

namespace {

constexpr double kPublishedSamples = 60000.0 * 1024.0;
constexpr int kPublishedTestInstances = 10000;
constexpr int kPublishedN = 100;

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    out.push_back(trim(std::string_view(line).substr(pos, comma - pos)));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

double to_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw ValidationError(fmt::format("line {}: '{}' is not a number", line, s));
  return v;
}

int to_int(const std::string& s, std::size_t line) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw ValidationError(fmt::format("line {}: '{}' is not an integer", line, s));
  return static_cast<int>(v);
}

EvalRecord published_record(int depth, int width, int beam, double gap, double wall_seconds) {
  EvalRecord r;
  r.config = model::grid_config(depth, width);
  r.params = model::param_count(r.config);
  r.decode = beam == 1 ? "greedy" : fmt::format("beam:{}", beam);
  r.dataset = "tsp100-uniform";
  r.n = kPublishedN;
  r.instances = kPublishedTestInstances;
  r.mean_gap = gap;
  r.wall_seconds = wall_seconds;
  r.gflops = scaling::flops_per_solution(r.config, kPublishedN, beam);
  r.samples = kPublishedSamples;
  return r;
}

}  // namespace

void EvalRecord::validate() const {
  config.validate();
  if (params < 0 || n < 0 || instances < 0 || mean_gap < 0.0 || wall_seconds < 0.0 || gflops < 0.0 ||
      samples < 0.0)
    throw ValidationError("evaluation record fields must be nonnegative");
}

std::size_t CsvTable::column(std::string_view name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ValidationError(fmt::format("CSV is missing column '{}'", name));
  return static_cast<std::size_t>(it - header.begin());
}

bool CsvTable::has(std::string_view name) const {
  return std::find(header.begin(), header.end(), name) != header.end();
}

CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    auto cells = split(s);
    if (t.header.empty()) {
      t.header = std::move(cells);
      continue;
    }
    if (cells.size() != t.header.size())
      throw ValidationError(fmt::format("CSV line {}: expected {} fields, got {}", lineno,
                                        t.header.size(), cells.size()));
    t.rows.push_back(std::move(cells));
  }
  if (t.header.empty()) throw ValidationError("CSV has no header");
  return t;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path.string() + "'");
  return read_csv(in);
}

void write_eval_csv(std::ostream& out, const std::vector<EvalRecord>& rows) {
  out << kEvalCsvHeader << '\n';
  for (const auto& r : rows) {
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.config.depth,
                       r.config.width, r.config.heads, r.config.qkv_dim, r.config.ffn_dim, r.params,
                       r.decode, r.dataset, r.n, r.instances, r.mean_gap, r.wall_seconds, r.gflops,
                       r.samples);
  }
}

std::vector<EvalRecord> read_eval_csv(std::istream& in) {
  const CsvTable t = read_csv(in);
  std::vector<EvalRecord> out;
  if (t.has("mean_gap")) {
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const auto& row = t.rows[i];
      const std::size_t line = i + 2;
      EvalRecord r;
      r.config.depth = to_int(row[t.column("depth")], line);
      r.config.width = to_int(row[t.column("width")], line);
      r.config.heads = to_int(row[t.column("heads")], line);
      r.config.qkv_dim = to_int(row[t.column("qkv_dim")], line);
      r.config.ffn_dim = to_int(row[t.column("ffn_dim")], line);
      r.params = static_cast<std::int64_t>(to_double(row[t.column("params")], line));
      r.decode = row[t.column("decode")];
      r.dataset = row[t.column("dataset")];
      r.n = to_int(row[t.column("n")], line);
      r.instances = to_int(row[t.column("instances")], line);
      r.mean_gap = to_double(row[t.column("mean_gap")], line);
      r.wall_seconds = to_double(row[t.column("wall_seconds")], line);
      r.gflops = to_double(row[t.column("gflops")], line);
      r.samples = to_double(row[t.column("samples")], line);
      r.validate();
      out.push_back(std::move(r));
    }
  } else if (t.has("gap_pct") && t.has("time_min")) {
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const auto& row = t.rows[i];
      out.push_back(published_record(to_int(row[t.column("depth")], i + 2), to_int(row[t.column("width")], i + 2),
                                 1, to_double(row[t.column("gap_pct")], i + 2),
                                 60.0 * to_double(row[t.column("time_min")], i + 2)));
    }
  } else if (t.has("gap_pct") && t.has("beam")) {
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const auto& row = t.rows[i];
      out.push_back(published_record(to_int(row[t.column("depth")], i + 2), to_int(row[t.column("width")], i + 2),
                                 to_int(row[t.column("beam")], i + 2),
                                 to_double(row[t.column("gap_pct")], i + 2), 0.0));
    }
  } else {
    throw ValidationError("unrecognized records CSV schema");
  }
  return out;
}

std::vector<EvalRecord> read_eval_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open records file '" + path.string() + "'");
  return read_eval_csv(in);
}

// --- fixtures ---------------------------------------------------------------

std::filesystem::path fixture_dir(const std::filesystem::path& fallback) {
  if (const char* env = std::getenv("NCO_FIXTURE_DIR"); env != nullptr && *env != '\0') return env;
  return fallback;
}

std::vector<Table1Row> load_table1(const std::filesystem::path& dir) {
  const CsvTable t = read_csv(dir / "table1.csv");
  std::vector<Table1Row> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    out.push_back({to_int(r[t.column("depth")], i + 2), to_int(r[t.column("width")], i + 2),
                   to_int(r[t.column("heads")], i + 2), to_int(r[t.column("qkv_dim")], i + 2),
                   to_int(r[t.column("ffn_dim")], i + 2), to_double(r[t.column("params_m")], i + 2)});
  }
  return out;
}

std::vector<Table9Row> load_table9(const std::filesystem::path& dir) {
  const CsvTable t = read_csv(dir / "table9.csv");
  std::vector<Table9Row> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    out.push_back({to_int(r[t.column("depth")], i + 2), to_int(r[t.column("width")], i + 2),
                   to_double(r[t.column("gap_pct")], i + 2), to_double(r[t.column("time_min")], i + 2)});
  }
  return out;
}

std::vector<Table12Row> load_table12(const std::filesystem::path& dir) {
  const CsvTable t = read_csv(dir / "table12.csv");
  std::vector<Table12Row> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    out.push_back({to_int(r[t.column("depth")], i + 2), to_int(r[t.column("width")], i + 2),
                   to_int(r[t.column("n")], i + 2), r[t.column("decode")],
                   to_double(r[t.column("gflops")], i + 2)});
  }
  return out;
}

std::vector<Table13Row> load_table13(const std::filesystem::path& dir) {
  const CsvTable t = read_csv(dir / "table13.csv");
  std::vector<Table13Row> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    out.push_back({to_int(r[t.column("depth")], i + 2), to_int(r[t.column("width")], i + 2),
                   to_int(r[t.column("beam")], i + 2), to_double(r[t.column("gap_pct")], i + 2)});
  }
  return out;
}

// --- fit reports ------------------------------------------------------------

FitForm parse_fit_form(std::string_view text) {
  if (text == "N") return FitForm::kParams;
  if (text == "S") return FitForm::kSamples;
  if (text == "C") return FitForm::kCompute;
  if (text == "WD" || text == "DW") return FitForm::kDepthWidth;
  if (text == "NA") return FitForm::kParamsRatio;
  if (text == "time") return FitForm::kTime;
  throw ValidationError(fmt::format("unknown fit form '{}' (expected N, S, C, WD, NA or time)", text));
}

std::string_view to_string(FitForm form) {
  switch (form) {
    case FitForm::kParams: return "N";
    case FitForm::kSamples: return "S";
    case FitForm::kCompute: return "C";
    case FitForm::kDepthWidth: return "WD";
    case FitForm::kParamsRatio: return "NA";
    case FitForm::kTime: return "time";
  }
  return "N";
}

bool RecordFilter::accepts(const EvalRecord& r) const {
  if (depth && r.config.depth != *depth) return false;
  if (width && r.config.width != *width) return false;
  if (decode && r.decode != *decode) return false;
  return true;
}

GroupBy parse_group_by(std::string_view text) {
  if (text == "none") return GroupBy::kNone;
  if (text == "depth") return GroupBy::kDepth;
  if (text == "width") return GroupBy::kWidth;
  throw ValidationError(fmt::format("unknown grouping '{}' (expected none, depth or width)", text));
}

FitReport fit_records(const std::vector<EvalRecord>& records, FitForm form,
                      std::optional<scaling::FitMethod> method, const RecordFilter& filter,
                      GroupBy group_by) {
  const bool bivariate = form == FitForm::kDepthWidth || form == FitForm::kParamsRatio;
  FitReport report;
  report.form = form;
  report.method = method.value_or(bivariate ? scaling::FitMethod::kLogLinear : scaling::FitMethod::kGapSpace);
  report.param_constant = model::fitted_param_constant();

  std::map<int, std::vector<const EvalRecord*>> groups;
  for (const auto& r : records) {
    if (!filter.accepts(r)) continue;
    if (!(r.mean_gap > 0.0)) {
      ++report.skipped_nonpositive;
      continue;
    }
    const int key = group_by == GroupBy::kDepth ? r.config.depth
                    : group_by == GroupBy::kWidth ? r.config.width
                                                  : 0;
    groups[key].push_back(&r);
  }
  if (groups.empty()) throw ValidationError("no records match the filter");

  for (const auto& [key, rows] : groups) {
    CurveFit curve;
    curve.label = group_by == GroupBy::kDepth   ? fmt::format("D={}", key)
                  : group_by == GroupBy::kWidth ? fmt::format("W={}", key)
                                                : std::string("all");
    if (bivariate) {
      for (const auto* r : rows) {
        if (form == FitForm::kDepthWidth) {
          curve.points2.push_back({static_cast<double>(r->config.depth), static_cast<double>(r->config.width),
                                   r->mean_gap});
        } else {
          curve.points2.push_back({static_cast<double>(r->params),
                                   static_cast<double>(r->config.depth) / r->config.width, r->mean_gap});
        }
      }
      curve.bivariate = scaling::fit_bivariate(curve.points2, report.method);
    } else {
      for (const auto* r : rows) {
        double x = 0.0;
        switch (form) {
          case FitForm::kParams: x = static_cast<double>(r->params); break;
          case FitForm::kSamples: x = r->samples; break;
          case FitForm::kCompute: x = r->gflops; break;
          case FitForm::kTime: x = r->wall_seconds / 60.0; break;
          default: break;
        }
        curve.points.push_back({x, r->mean_gap});
      }
      std::sort(curve.points.begin(), curve.points.end(),
                [](const scaling::XY& a, const scaling::XY& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
      if (form == FitForm::kTime) {
        curve.shifted = scaling::fit_shifted(curve.points);
      } else {
        curve.power = scaling::fit_power(curve.points, report.method);
      }
    }
    report.curves.push_back(std::move(curve));
  }
  return report;
}

nlohmann::json to_json(const FitReport& report) {
  nlohmann::json j;
  j["form"] = std::string(to_string(report.form));
  j["method"] = std::string(scaling::to_string(report.method));
  if (report.form == FitForm::kParamsRatio) j["param_constant_c"] = report.param_constant;
  j["skipped_nonpositive"] = report.skipped_nonpositive;
  j["curves"] = nlohmann::json::array();
  for (const auto& c : report.curves) {
    nlohmann::json cj;
    cj["label"] = c.label;
    if (c.power) {
      cj["alpha"] = c.power->alpha;
      cj["x_c"] = c.power->x_c;
      cj["r2"] = c.power->r2;
      cj["mape"] = c.power->mape;
      cj["n_points"] = c.power->n_points;
    }
    if (c.bivariate) {
      const bool dw = report.form == FitForm::kDepthWidth;
      cj[dw ? "beta_d" : "beta_n"] = c.bivariate->beta1;
      cj[dw ? "beta_w" : "beta_a"] = c.bivariate->beta2;
      cj[dw ? "d_c" : "n_c"] = c.bivariate->c1;
      cj[dw ? "w_c" : "a_c"] = c.bivariate->c2;
      cj["r2"] = c.bivariate->r2;
      cj["mape"] = c.bivariate->mape;
      cj["n_points"] = c.bivariate->n_points;
    }
    if (c.shifted) {
      cj["alpha_t"] = c.shifted->alpha_t;
      cj["beta_t"] = c.shifted->beta_t;
      cj["gamma"] = c.shifted->gamma;
      cj["r2"] = c.shifted->r2;
      cj["mape"] = c.shifted->mape;
      cj["n_points"] = c.shifted->n_points;
      cj["converged"] = c.shifted->converged;
    }
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : c.points) pts.push_back({p.x, p.y});
    for (const auto& p : c.points2) pts.push_back({p.x1, p.x2, p.y});
    cj["points"] = std::move(pts);
    j["curves"].push_back(std::move(cj));
  }
  return j;
}

}  // namespace nco::records
