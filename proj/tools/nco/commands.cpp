#include "commands.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "manifest.hpp"
#include "nco/analysis.hpp"
#include "nco/checkpoint.hpp"
#include "nco/dataset.hpp"
#include "nco/decoding.hpp"
#include "nco/error.hpp"
#include "nco/parallel.hpp"
#include "nco/records.hpp"
#include "nco/report.hpp"
#include "nco/scaling.hpp"
#include "nco/training.hpp"

#ifndef NCO_GIT_DESCRIBE
#define NCO_GIT_DESCRIBE "unknown"
#endif
#ifndef NCO_DEFAULT_FIXTURE_DIR
#define NCO_DEFAULT_FIXTURE_DIR "fixtures"
#endif

namespace nco::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::system_clock;

int threads_of(const Common& c) { return c.threads > 0 ? c.threads : default_threads(); }

fs::path prepare_out(const Common& c) {
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec || !fs::is_directory(c.out))
    throw ValidationError(fmt::format("cannot create output directory '{}'", c.out.string()));
  return c.out;
}

RunManifest start_manifest(std::string command, json config, std::uint64_t seed) {
  RunManifest m;
  m.command = std::move(command);
  m.config = std::move(config);
  m.seed = seed;
  m.git_describe = NCO_GIT_DESCRIBE;
  m.started = Clock::now();
  return m;
}

void finish(const fs::path& dir, RunManifest& m, json& summary) {
  m.finished = Clock::now();
  const auto path = write_manifest(dir, m);
  summary["status"] = "ok";
  summary["manifest"] = path.string();
  summary["config_hash"] = config_hash(m.config);
}

template <typename Fn>
fs::path write_file(const fs::path& path, Fn&& fn) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  fn(out);
  if (!out) throw ValidationError("failed writing '" + path.string() + "'");
  return path;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("malformed JSON in '{}': {}", path.string(), e.what()));
  }
}

model::ModelConfig desk_model() {
  model::ModelConfig c;
  c.depth = 2;
  c.width = 32;
  c.heads = 4;
  c.qkv_dim = 8;
  c.ffn_dim = 128;
  return c;
}

/// The model section of a config file: either {"model": {...}} or the bare model object.
std::optional<model::ModelConfig> model_section(const json& j) {
  try {
    if (j.contains("model")) return j.at("model").get<model::ModelConfig>();
    if (j.contains("depth") || j.contains("width")) return j.get<model::ModelConfig>();
  } catch (const json::exception& e) {
    throw ValidationError(fmt::format("bad model config: {}", e.what()));
  }
  return std::nullopt;
}

fs::path checkpoint_file(const fs::path& p) { return fs::is_directory(p) ? p / "model.bin" : p; }

std::vector<tsp::TspInstance> first(std::vector<tsp::TspInstance> v, std::optional<std::uint64_t> limit) {
  if (limit && *limit < v.size()) v.resize(*limit);
  return v;
}

/// n_train and samples seen from the training manifest next to a checkpoint.
struct TrainInfo {
  std::optional<int> n_train;
  double samples_seen = 0.0;
};

TrainInfo train_info(const fs::path& ckpt) {
  TrainInfo info;
  const json m = read_manifest(checkpoint_file(ckpt).parent_path());
  if (m.is_object() && m.value("command", "") == "train") {
    if (m.contains("n_train")) info.n_train = m.at("n_train").get<int>();
    info.samples_seen = m.value("samples_seen", 0.0);
  }
  return info;
}

std::string dataset_name(const tsp::DatasetHeader& h) {
  return fmt::format("tsp{}-{}", h.n, tsp::to_string(h.kind));
}

std::string rel(const fs::path& p) { return p.filename().string(); }

}  // namespace

fs::path dataset_path(const fs::path& p) { return fs::is_directory(p) ? p / "dataset.bin" : p; }

// --- gen-data ---------------------------------------------------------------

json gen_data(const Common& common, const GenDataOptions& o) {
  const auto kind = tsp::parse_distribution(o.kind);
  const auto label = tsp::parse_label_kind(o.label);
  if (label == tsp::LabelKind::kTsplib) throw ValidationError("gen-data cannot produce TSPLIB labels");
  if (label == tsp::LabelKind::kHeldKarp && o.n > tsp::kHeldKarpMaxNodes)
    throw ValidationError(
        fmt::format("heldkarp labels need n <= {}, got {}; use --label nn2opt", tsp::kHeldKarpMaxNodes, o.n));
  if (o.n < 4) throw ValidationError(fmt::format("--n must be at least 4, got {}", o.n));
  if (o.count < 1) throw ValidationError("--count must be positive");

  const json config{{"kind", o.kind}, {"n", o.n}, {"count", o.count}, {"seed", o.seed}, {"label", o.label}};
  auto manifest = start_manifest("gen-data", config, o.seed);
  const fs::path dir = prepare_out(common);

  const auto instances = tsp::generate_dataset(kind, o.n, o.count, o.seed, label, threads_of(common));
  tsp::DatasetHeader header;
  header.kind = kind;
  header.label = label;
  header.n = o.n;
  header.count = o.count;
  header.seed = o.seed;
  const fs::path data = dir / "dataset.bin";
  tsp::write_dataset(data, header, instances);
  manifest.outputs = {data};

  json summary{{"command", "gen-data"}, {"dataset", data.string()}, {"count", o.count}, {"n", o.n},
               {"label", o.label}};
  finish(dir, manifest, summary);
  return summary;
}

// --- train ------------------------------------------------------------------

json train(const Common& common, const TrainOptions& o) {
  train::TrainConfig tc;
  model::ModelConfig mc;
  if (o.preset == "desk") {
    tc = train::TrainConfig::desk();
    mc = desk_model();
  } else if (o.preset != "full") {
    throw ValidationError(fmt::format("unknown preset '{}' (expected desk or full)", o.preset));
  }
  if (o.config) {
    const json file = read_json_file(*o.config);
    if (!file.is_object()) throw ValidationError("training config must be a JSON object");
    if (auto m = model_section(file)) mc = *m;
    json train_part = file;
    if (file.contains("train")) train_part = file.at("train");
    train_part.erase("depth");
    train_part.erase("width");
    train_part.erase("heads");
    train_part.erase("qkv_dim");
    train_part.erase("ffn_dim");
    train_part.erase("gated_attention");
    train_part.erase("rezero");
    train::from_json(train_part, tc);
  }
  if (o.seed) tc.seed = *o.seed;
  if (o.steps) tc.total_steps = *o.steps;
  mc.validate();
  tc.validate();

  tsp::DatasetReader reader(dataset_path(o.data));
  const auto header = reader.header();
  if (!reader.labeled()) throw ValidationError("training needs a labeled dataset");
  const auto dataset = reader.read_all();

  json config;
  config["model"] = mc;
  json tj;
  train::to_json(tj, tc);
  config["train"] = tj;
  config["dataset"] = {{"name", dataset_name(header)}, {"count", header.count}, {"seed", header.seed},
                       {"label", tsp::to_string(header.label)}};
  config["checkpoint_every"] = o.checkpoint_every;
  auto manifest = start_manifest("train", config, tc.seed);
  const fs::path dir = prepare_out(common);

  train::RunOptions ro;
  ro.threads = threads_of(common);
  ro.checkpoint_every = o.checkpoint_every;
  ro.out_dir = dir;
  if (o.resume) ro.resume = train::load_training_state(*o.resume);
  const auto result = train::run_training(tc, mc, dataset, ro);

  const double samples = static_cast<double>(result.state.opt.step) * tc.batch_size;
  manifest.outputs = {dir / "loss.csv", dir / "model.bin", dir / "train_state.bin"};
  for (const auto& c : result.checkpoints)
    if (std::find(manifest.outputs.begin(), manifest.outputs.end(), c) == manifest.outputs.end())
      manifest.outputs.push_back(c);
  manifest.extra["n_train"] = header.n;
  manifest.extra["samples_seen"] = samples;
  manifest.extra["steps"] = result.state.opt.step;
  if (o.resume) manifest.extra["resumed_from"] = o.resume->string();

  json summary{{"command", "train"},
               {"steps", result.state.opt.step},
               {"samples_seen", samples},
               {"final_loss", result.losses.empty() ? json(nullptr) : json(result.losses.back().loss)},
               {"model", (dir / "model.bin").string()}};
  finish(dir, manifest, summary);
  return summary;
}

// --- eval -------------------------------------------------------------------

json eval(const Common& common, const EvalOptions& o) {
  if (o.data.has_value() == o.tsplib.has_value()) throw ValidationError("eval needs exactly one of --data or --tsplib");
  const auto params = model::load_checkpoint(checkpoint_file(o.ckpt));
  if (o.config) {
    const auto expected = model_section(read_json_file(*o.config));
    if (!expected) throw ValidationError("--config has no model section");
    if (!(*expected == params.config))
      throw StateMismatchError(fmt::format("checkpoint model {} does not match --config {}",
                                           json(params.config).dump(), json(*expected).dump()));
  }

  std::vector<tsp::TspInstance> instances;
  std::string dataset;
  json data_config;
  if (o.data) {
    tsp::DatasetReader reader(dataset_path(*o.data));
    dataset = dataset_name(reader.header());
    instances = first(reader.read_all(), o.limit);
    data_config = {{"name", dataset}, {"seed", reader.header().seed},
                   {"label", tsp::to_string(reader.header().label)}};
  } else {
    if (!o.optimum) throw ValidationError("--tsplib needs --optimum (the known optimal tour length)");
    std::ifstream in(*o.tsplib);
    if (!in) throw ValidationError("cannot open '" + o.tsplib->string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    auto inst = tsp::parse_tsplib(ss.str());
    inst.ref_cost = *o.optimum;
    inst.label = tsp::LabelKind::kTsplib;
    dataset = inst.name.empty() ? o.tsplib->stem().string() : inst.name;
    instances.push_back(std::move(inst));
    data_config = {{"name", dataset}, {"optimum", *o.optimum}};
  }
  if (o.decode == "reference" && o.tsplib) throw ValidationError("TSPLIB input has no reference tour");

  const TrainInfo info = train_info(o.ckpt);
  const int n = instances.front().n();
  const int n_train = o.n_train.value_or(info.n_train.value_or(n));
  const auto spec = decode::parse_decode_spec(o.decode, o.seed);

  json config{{"model", params.config}, {"decode", decode::to_string(spec)}, {"seed", o.seed},
              {"n_train", n_train}, {"log_n_correction", !o.no_log_n}, {"data", data_config},
              {"instances", instances.size()}};
  auto manifest = start_manifest("eval", config, o.seed);
  const fs::path dir = prepare_out(common);

  const auto ev = analysis::evaluate(params, n_train, instances, spec, threads_of(common), !o.no_log_n);
  const auto record = analysis::to_record(ev, params.config, dataset, n, info.samples_seen);
  manifest.outputs = {
      write_file(dir / "records.csv", [&](std::ostream& out) { records::write_eval_csv(out, {record}); }),
      write_file(dir / "tours.csv", [&](std::ostream& out) { analysis::write_tours_csv(out, ev); }),
      write_file(dir / "timing.csv", [&](std::ostream& out) { analysis::write_timing_csv(out, ev); })};

  json summary{{"command", "eval"},          {"decode", ev.decode},      {"instances", ev.rows.size()},
               {"mean_gap", ev.mean_gap},    {"gflops_per_solution", ev.gflops_per_solution},
               {"wall_seconds", ev.total_wall_seconds}, {"records", (dir / "records.csv").string()}};
  finish(dir, manifest, summary);
  return summary;
}

// --- fit-scaling ------------------------------------------------------------

json fit_scaling(const Common& common, const FitOptions& o) {
  const fs::path fixtures = records::fixture_dir(NCO_DEFAULT_FIXTURE_DIR);
  fs::path path = o.records.value_or(fixtures / "table9.csv");
  if (!fs::exists(path)) {
    // bare fixture names such as "table13" or "table13.csv"
    fs::path candidate = fixtures / path.filename();
    if (!candidate.has_extension()) candidate += ".csv";
    if (path.parent_path().empty() && fs::exists(candidate)) path = candidate;
  }
  const auto rows = records::read_eval_csv(path);

  const auto form = records::parse_fit_form(o.form);
  std::optional<scaling::FitMethod> method;
  if (o.method) method = scaling::parse_fit_method(*o.method);
  const auto group = records::parse_group_by(o.group_by);
  records::RecordFilter filter;
  filter.depth = o.depth;
  filter.width = o.width;
  filter.decode = o.decode;

  json config{{"records", path.filename().string()}, {"form", o.form}, {"group_by", o.group_by}};
  config["method"] = o.method ? json(*o.method) : json(nullptr);
  config["filter"] = {{"depth", o.depth ? json(*o.depth) : json(nullptr)},
                      {"width", o.width ? json(*o.width) : json(nullptr)},
                      {"decode", o.decode ? json(*o.decode) : json(nullptr)}};
  auto manifest = start_manifest("fit-scaling", config, 0);
  const fs::path dir = prepare_out(common);

  const auto report = records::fit_records(rows, form, method, filter, group);
  const json j = records::to_json(report);
  manifest.outputs = {write_file(dir / "fit.json", [&](std::ostream& out) { out << j.dump(2) << '\n'; })};
  const fs::path svg = dir / "fit.svg";
  report::write_text(svg, report::render_svg(report::fit_plot(report)));
  manifest.outputs.push_back(svg);

  json curves = json::array();
  for (auto c : j.at("curves")) {
    c.erase("points");
    curves.push_back(std::move(c));
  }
  json summary{{"command", "fit-scaling"}, {"form", j.at("form")}, {"method", j.at("method")},
               {"curves", curves}, {"fit", (dir / "fit.json").string()}};
  if (j.contains("param_constant_c")) summary["param_constant_c"] = j.at("param_constant_c");
  finish(dir, manifest, summary);
  return summary;
}

// --- analyze ----------------------------------------------------------------

json analyze(const Common& common, const AnalyzeOptions& o) {
  json config{{"report", o.report}};
  const fs::path dir = prepare_out(common);
  json summary{{"command", "analyze"}, {"report", o.report}};
  std::vector<fs::path> outputs;

  if (o.report == "flops") {
    model::ModelConfig mc;
    if (o.ckpt) {
      mc = model::load_checkpoint(checkpoint_file(*o.ckpt)).config;
    } else {
      if (!o.depth || !o.width) throw ValidationError("--report flops needs --ckpt or --depth and --width");
      mc = model::grid_config(*o.depth, *o.width);
    }
    if (o.beam < 1) throw ValidationError("--beam must be positive");
    const double gflops = scaling::flops_per_solution(mc, o.n, o.beam);
    config.update(json{{"model", mc}, {"n", o.n}, {"beam", o.beam}});
    auto manifest = start_manifest("analyze", config, 0);
    const json out{{"params", model::param_count(mc)}, {"n", o.n}, {"beam", o.beam}, {"gflops", gflops}};
    manifest.outputs = {write_file(dir / "flops.json", [&](std::ostream& s) { s << out.dump(2) << '\n'; })};
    summary.update(out);
    finish(dir, manifest, summary);
    return summary;
  }

  if (!o.data) throw ValidationError(fmt::format("--report {} needs --data", o.report));
  tsp::DatasetReader reader(dataset_path(*o.data));
  const auto instances = first(reader.read_all(), o.limit);
  if (instances.empty()) throw ValidationError("dataset is empty");
  config["data"] = {{"name", dataset_name(reader.header())}, {"seed", reader.header().seed},
                    {"instances", instances.size()}};

  std::optional<model::ModelParams> params;
  int n_train = reader.n();
  const bool needs_model = o.report != "longsight" || o.policy == "model";
  if (needs_model) {
    if (!o.ckpt) throw ValidationError(fmt::format("--report {} needs --ckpt", o.report));
    params = model::load_checkpoint(checkpoint_file(*o.ckpt));
    n_train = o.n_train.value_or(train_info(*o.ckpt).n_train.value_or(reader.n()));
    config["model"] = params->config;
    config["n_train"] = n_train;
  }

  if (o.report == "longsight") {
    analysis::PolicyFactory policy;
    if (o.policy == "model") policy = analysis::model_policy(*params, n_train);
    else if (o.policy == "oracle") policy = analysis::oracle_policy();
    else if (o.policy == "nearest") policy = analysis::nearest_policy();
    else throw ValidationError(fmt::format("unknown policy '{}' (expected model, oracle or nearest)", o.policy));
    config.update(json{{"policy", o.policy}, {"k", o.k}});
    auto manifest = start_manifest("analyze", config, 0);
    const auto rep = analysis::long_sightedness(instances, o.k, policy, threads_of(common));
    outputs.push_back(write_file(dir / "longsight.csv", [&](std::ostream& s) { analysis::write_longsight_csv(s, rep); }));
    outputs.push_back(dir / "longsight.svg");
    report::write_text(outputs.back(), report::render_svg(report::longsight_plot(rep)));
    json rates = json::array();
    for (const auto& b : rep.buckets) rates.push_back(b.rate());
    summary["attempts"] = rep.total_attempts();
    summary["rates"] = rates;
    manifest.outputs = outputs;
    finish(dir, manifest, summary);
    return summary;
  }

  if (o.report != "cosine" && o.report != "pca")
    throw ValidationError(fmt::format("unknown report '{}' (expected longsight, pca, cosine or flops)", o.report));
  if (o.instance >= instances.size())
    throw ValidationError(fmt::format("--instance {} is out of range ({} instances)", o.instance, instances.size()));
  const auto& inst = instances[o.instance];
  const int step = o.step.value_or(std::max(1, inst.n() / 2));
  config.update(json{{"instance", o.instance}, {"step", step}});
  auto manifest = start_manifest("analyze", config, 0);
  const auto snap = analysis::snapshot(*params, n_train, inst, step);

  if (o.report == "cosine") {
    analysis::Matrix all{snap.context.rows + snap.available.rows, snap.context.cols, snap.context.data};
    all.data.insert(all.data.end(), snap.available.data.begin(), snap.available.data.end());
    const auto cos = analysis::cosine_map(all);
    outputs.push_back(write_file(dir / "cosine.csv", [&](std::ostream& s) { analysis::write_matrix_csv(s, cos); }));
    outputs.push_back(write_file(dir / "cosine_nodes.csv", [&](std::ostream& s) {
      s << "row,node,role\n";
      s << fmt::format("0,{},start\n1,{},current\n", snap.context_nodes[0], snap.context_nodes[1]);
      for (std::size_t i = 0; i < snap.nodes.size(); ++i)
        s << fmt::format("{},{},{}\n", i + 2, snap.nodes[i], snap.is_next[i] ? "next" : "available");
    }));
    summary["rows"] = cos.rows;
  } else {
    const auto pca = analysis::pca2d(snap.available);
    outputs.push_back(write_file(dir / "pca.csv", [&](std::ostream& s) {
      s << "node,is_next,pc1,pc2\n";
      for (std::size_t r = 0; r < pca.projection.rows; ++r)
        s << fmt::format("{},{},{:.17g},{:.17g}\n", snap.nodes[r], snap.is_next[r] ? 1 : 0, pca.projection.at(r, 0),
                         pca.projection.at(r, 1));
    }));
    outputs.push_back(dir / "pca.svg");
    report::write_text(outputs.back(), report::render_svg(report::pca_plot(pca, snap.is_next)));
    summary["explained"] = {pca.explained[0], pca.explained[1]};
  }
  summary["step"] = step;
  summary["outputs"] = json::array();
  for (const auto& p : outputs) summary["outputs"].push_back(rel(p));
  manifest.outputs = outputs;
  finish(dir, manifest, summary);
  return summary;
}

}  // namespace nco::cli
