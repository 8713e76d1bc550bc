#include "nco/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "nco/binary_io.hpp"
#include "nco/checkpoint.hpp"
#include "nco/error.hpp"
#include "nco/parallel.hpp"

namespace nco::train {

using model::ModelParams;
using model::ParamRole;
using tsp::TspInstance;

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.batch_size = 64;
  c.total_steps = 5000;
  c.lr0 = 2e-3;
  return c;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ValidationError("batch_size must be positive");
  if (total_steps < 0) throw ValidationError("total_steps must be nonnegative");
  if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw ValidationError("lr0 must be positive");
  if (!(decay_gamma > 0.0 && decay_gamma <= 1.0)) throw ValidationError("decay_gamma must be in (0, 1]");
  if (decay_every < 1) throw ValidationError("decay_every must be positive");
  if (weight_decay < 0.0) throw ValidationError("weight_decay must be nonnegative");
  if (grad_clip && !(*grad_clip > 0.0)) throw ValidationError("grad_clip must be positive when set");
  if (mode == DataMode::kEpochs && epochs < 1) throw ValidationError("epochs must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ValidationError("adam betas must be in [0, 1)");
  if (!(eps > 0.0)) throw ValidationError("eps must be positive");
  if (subpath_min < 2) throw ValidationError("subpath_min must be at least 2");
  if (chunk_size < 1) throw ValidationError("chunk_size must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"batch_size", c.batch_size},
                     {"total_steps", c.total_steps},
                     {"lr0", c.lr0},
                     {"decay_gamma", c.decay_gamma},
                     {"decay_every", c.decay_every},
                     {"weight_decay", c.weight_decay},
                     {"grad_clip", c.grad_clip ? nlohmann::json(*c.grad_clip) : nlohmann::json(nullptr)},
                     {"seed", c.seed},
                     {"mode", c.mode == DataMode::kSinglePass ? "single_pass" : "epochs"},
                     {"epochs", c.epochs},
                     {"optimizer", "adamw"},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"eps", c.eps},
                     {"subpath_min", c.subpath_min},
                     {"chunk_size", c.chunk_size}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw ValidationError("training config must be a JSON object");
  static const char* known[] = {"batch_size", "total_steps", "lr0",   "decay_gamma", "decay_every",
                                "weight_decay", "grad_clip", "seed",  "mode",        "epochs",
                                "optimizer",  "beta1",       "beta2", "eps",         "subpath_min",
                                "chunk_size", "model"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known))
      throw ValidationError("unknown training config key '" + key + "'");
  }
  try {
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
    if (j.contains("total_steps")) c.total_steps = j.at("total_steps").get<int>();
    if (j.contains("lr0")) c.lr0 = j.at("lr0").get<double>();
    if (j.contains("decay_gamma")) c.decay_gamma = j.at("decay_gamma").get<double>();
    if (j.contains("decay_every")) c.decay_every = j.at("decay_every").get<int>();
    if (j.contains("weight_decay")) c.weight_decay = j.at("weight_decay").get<double>();
    if (j.contains("grad_clip")) {
      const auto& g = j.at("grad_clip");
      c.grad_clip = g.is_null() ? std::nullopt : std::optional<double>(g.get<double>());
    }
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("mode")) {
      const auto mode = j.at("mode").get<std::string>();
      if (mode == "single_pass") {
        c.mode = DataMode::kSinglePass;
      } else if (mode == "epochs") {
        c.mode = DataMode::kEpochs;
      } else {
        throw ValidationError("mode must be 'single_pass' or 'epochs'");
      }
    }
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
    if (j.contains("optimizer") && j.at("optimizer").get<std::string>() != "adamw")
      throw ValidationError("only the adamw optimizer is supported");
    if (j.contains("beta1")) c.beta1 = j.at("beta1").get<double>();
    if (j.contains("beta2")) c.beta2 = j.at("beta2").get<double>();
    if (j.contains("eps")) c.eps = j.at("eps").get<double>();
    if (j.contains("subpath_min")) c.subpath_min = j.at("subpath_min").get<int>();
    if (j.contains("chunk_size")) c.chunk_size = j.at("chunk_size").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("bad training config: ") + e.what());
  }
  c.validate();
}

double lr_at(const TrainConfig& config, std::int64_t step) {
  if (step < 0) throw ValidationError("step must be nonnegative");
  return config.lr0 * std::pow(config.decay_gamma, static_cast<double>(step / config.decay_every));
}

Sample sample_partial(std::span<const int> tour, Rng& rng, int subpath_min) {
  const int n = static_cast<int>(tour.size());
  if (n < 5) throw ValidationError(fmt::format("partial sampling needs n >= 5, got {}", n));
  if (!tsp::is_permutation(tour, n)) throw ValidationError("reference tour is not a permutation");
  if (subpath_min < 2 || subpath_min > n) throw ValidationError("subpath_min out of range");
  const bool reverse = rng.bernoulli(0.5);
  const int offset = rng.uniform_int(0, n - 1);
  const int len = rng.uniform_int(subpath_min, n);
  auto at = [&](int k) {
    const int pos = reverse ? ((offset - k) % n + n) % n : (offset + k) % n;
    return tour[static_cast<std::size_t>(pos)];
  };
  Sample s;
  s.state = model::ConstructionState::begin(n, at(0));
  for (int k = 1; k < len - 1; ++k) s.state.visit(at(k));
  s.target = at(len - 1);
  return s;
}

ad::Tensor sample_nll(const model::BoundParams& params, const TspInstance& instance,
                      const Sample& sample) {
  const model::StepGraph g = model::build_step(params, instance.coords, sample.state, 1.0);
  const auto it = std::find(g.row_nodes.begin() + 1, g.row_nodes.end() - 1, sample.target);
  if (it == g.row_nodes.end() - 1) throw ValidationError("training target is not an available node");
  const std::size_t target = static_cast<std::size_t>(it - g.row_nodes.begin());
  return ad::masked_cross_entropy(g.logits, g.mask, std::span(&target, 1));
}

double evaluate_loss(const ModelParams& params, std::span<const TspInstance> instances,
                     std::span<const Sample> samples) {
  if (instances.size() != samples.size() || samples.empty())
    throw ValidationError("evaluate_loss needs one instance per sample");
  ad::Tape tape;
  const auto bound = model::BoundParams::bind(tape, params, false);
  const std::size_t mark = tape.size();
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    total += sample_nll(bound, instances[i], samples[i]).item();
    tape.truncate(mark);
  }
  return total / static_cast<double>(samples.size());
}

OptimizerState OptimizerState::zeros(const model::ModelConfig& config) {
  return {ModelParams::zeros(config), ModelParams::zeros(config), 0};
}

namespace {

// Flat views of the three parameter sets, block by block, in the same order.
struct BlockRefs {
  std::vector<std::span<double>> blocks;
  std::vector<ParamRole> roles;
};

BlockRefs blocks_of(ModelParams& p) {
  BlockRefs r;
  p.for_each_block([&](std::span<double> b, ParamRole role) {
    r.blocks.push_back(b);
    r.roles.push_back(role);
  });
  return r;
}

std::vector<std::span<const double>> const_blocks_of(const ModelParams& p) {
  std::vector<std::span<const double>> out;
  p.for_each_block([&](std::span<const double> b, ParamRole) { out.push_back(b); });
  return out;
}

void add_into(ModelParams& dst, const ModelParams& src) {
  auto d = blocks_of(dst);
  const auto s = const_blocks_of(src);
  for (std::size_t b = 0; b < s.size(); ++b) {
    for (std::size_t i = 0; i < s[b].size(); ++i) d.blocks[b][i] += s[b][i];
  }
}

}  // namespace

void adamw_update(ModelParams& params, OptimizerState& opt, const ModelParams& grads,
                  const TrainConfig& config, double lr) {
  if (!(params.config == grads.config) || !(params.config == opt.m.config))
    throw StateMismatchError("optimizer state does not match the model");
  opt.step += 1;
  const double t = static_cast<double>(opt.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);

  double clip_factor = 1.0;
  const auto g_blocks = const_blocks_of(grads);
  if (config.grad_clip) {
    double sq = 0.0;
    for (const auto& b : g_blocks)
      for (double g : b) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > *config.grad_clip) clip_factor = *config.grad_clip / norm;
  }

  auto p = blocks_of(params);
  auto m = blocks_of(opt.m);
  auto v = blocks_of(opt.v);
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    const bool decay = p.roles[b] == ParamRole::kWeight && config.weight_decay > 0.0;
    for (std::size_t i = 0; i < p.blocks[b].size(); ++i) {
      const double g = g_blocks[b][i] * clip_factor;
      double& mi = m.blocks[b][i];
      double& vi = v.blocks[b][i];
      mi = config.beta1 * mi + (1.0 - config.beta1) * g;
      vi = config.beta2 * vi + (1.0 - config.beta2) * g * g;
      double& w = p.blocks[b][i];
      if (decay) w *= 1.0 - lr * config.weight_decay;
      w -= lr * (mi / bc1) / (std::sqrt(vi / bc2) + config.eps);
    }
  }
}

BatchGradient batch_gradient(const ModelParams& params,
                             std::span<const TspInstance* const> instances,
                             std::span<const Sample> samples, const TrainConfig& config,
                             int threads) {
  if (samples.empty()) throw ValidationError("empty batch");
  if (instances.size() != samples.size()) throw ValidationError("one instance per sample required");
  const std::size_t chunk = static_cast<std::size_t>(config.chunk_size);
  const std::size_t chunks = (samples.size() + chunk - 1) / chunk;
  const double inv = 1.0 / static_cast<double>(samples.size());

  std::vector<ModelParams> chunk_grads(chunks);
  std::vector<double> chunk_loss(chunks, 0.0);
  parallel_for(chunks, threads, [&](std::size_t c) {
    ad::Tape tape;
    const auto bound = model::BoundParams::bind(tape, params, true);
    const std::size_t lo = c * chunk;
    const std::size_t hi = std::min(samples.size(), lo + chunk);
    ad::Tensor total;
    for (std::size_t i = lo; i < hi; ++i) {
      const ad::Tensor nll = sample_nll(bound, *instances[i], samples[i]);
      total = total.valid() ? ad::add(total, nll) : nll;
    }
    const ad::Tensor loss = ad::scale(total, inv);
    tape.backward(loss);
    chunk_loss[c] = loss.item();
    chunk_grads[c] = ModelParams::zeros(params.config);
    bound.accumulate_grads(chunk_grads[c]);
  });

  BatchGradient out{ModelParams::zeros(params.config), 0.0};
  for (std::size_t c = 0; c < chunks; ++c) {
    add_into(out.grads, chunk_grads[c]);
    out.loss += chunk_loss[c];
  }
  return out;
}

double train_step(ModelParams& params, OptimizerState& opt,
                  std::span<const TspInstance* const> instances, std::span<const Sample> samples,
                  const TrainConfig& config, int threads) {
  BatchGradient bg = batch_gradient(params, instances, samples, config, threads);
  if (!std::isfinite(bg.loss))
    throw NumericalError(fmt::format("non-finite loss {} at optimizer step {}", bg.loss, opt.step));
  for (const auto& b : const_blocks_of(bg.grads)) {
    for (double g : b) {
      if (!std::isfinite(g))
        throw NumericalError(fmt::format("non-finite gradient at optimizer step {}", opt.step));
    }
  }
  adamw_update(params, opt, bg.grads, config, lr_at(config, opt.step));
  return bg.loss;
}

// --- training state ---------------------------------------------------------

namespace {
constexpr char kStateMagic[9] = "NCOTRAIN";
constexpr std::uint32_t kStateVersion = 1;
}  // namespace

void write_training_state(std::ostream& out, const TrainingState& state) {
  io::put_magic(out, kStateMagic);
  io::put_le<std::uint32_t>(out, kStateVersion);
  const std::string cfg = nlohmann::json(state.config).dump();
  io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.size()));
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  io::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(state.opt.step));
  model::write_checkpoint(out, state.params, model::Precision::kFloat64);
  model::write_checkpoint(out, state.opt.m, model::Precision::kFloat64);
  model::write_checkpoint(out, state.opt.v, model::Precision::kFloat64);
  if (!out) throw ValidationError("failed writing training state");
}

TrainingState read_training_state(std::istream& in) {
  io::expect_magic(in, kStateMagic, "training state");
  const auto version = io::get_le<std::uint32_t>(in);
  if (version != kStateVersion)
    throw ValidationError(fmt::format("unsupported training state version {}", version));
  const auto len = io::get_le<std::uint32_t>(in);
  std::string cfg(len, '\0');
  if (!in.read(cfg.data(), len)) throw ValidationError("truncated training state");
  TrainingState s;
  try {
    s.config = nlohmann::json::parse(cfg).get<TrainConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("corrupt training state config: ") + e.what());
  }
  s.opt.step = static_cast<std::int64_t>(io::get_le<std::uint64_t>(in));
  s.params = model::read_checkpoint(in);
  s.opt.m = model::read_checkpoint(in);
  s.opt.v = model::read_checkpoint(in);
  if (!(s.opt.m.config == s.params.config) || !(s.opt.v.config == s.params.config))
    throw StateMismatchError("training state moments do not match its parameters");
  return s;
}

void save_training_state(const std::filesystem::path& path, const TrainingState& state) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
  write_training_state(out, state);
}

TrainingState load_training_state(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open training state '" + path.string() + "'");
  return read_training_state(in);
}

// --- data stream ------------------------------------------------------------

DataStream::DataStream(const TrainConfig& config, std::uint64_t dataset_size)
    : mode_(config.mode), seed_(config.seed), size_(dataset_size) {
  if (dataset_size == 0) throw ValidationError("empty training dataset");
  capacity_ = mode_ == DataMode::kSinglePass ? size_ : size_ * static_cast<std::uint64_t>(config.epochs);
}

std::uint64_t DataStream::index(std::uint64_t pos) const {
  if (pos >= capacity_)
    throw ValidationError(fmt::format("training data exhausted at sample {} (capacity {})", pos, capacity_));
  if (mode_ == DataMode::kSinglePass) return pos;
  const auto epoch = static_cast<std::int64_t>(pos / size_);
  if (epoch != cached_epoch_) {
    perm_.resize(size_);
    std::iota(perm_.begin(), perm_.end(), std::uint64_t{0});
    Rng rng(derive_seed(seed_, 0xE90C, static_cast<std::uint64_t>(epoch)));
    for (std::uint64_t i = size_ - 1; i > 0; --i) {
      const auto j = static_cast<std::uint64_t>(rng.uniform_int(0, static_cast<int>(i)));
      std::swap(perm_[i], perm_[j]);
    }
    cached_epoch_ = epoch;
  }
  return perm_[pos % size_];
}

int steps_for_epochs(std::uint64_t dataset_size, int batch_size, int epochs) {
  if (batch_size < 1 || epochs < 1) throw ValidationError("batch_size and epochs must be positive");
  return static_cast<int>(dataset_size * static_cast<std::uint64_t>(epochs) /
                          static_cast<std::uint64_t>(batch_size));
}

// --- driver -----------------------------------------------------------------

void write_loss_csv(std::ostream& out, std::span<const LossRow> rows) {
  for (const auto& r : rows) out << fmt::format("{},{:.17g},{:.17g}\n", r.step, r.lr, r.loss);
}

namespace {

bool same_schedule(TrainConfig a, TrainConfig b) {
  a.total_steps = b.total_steps = 0;
  return a == b;
}

}  // namespace

RunResult run_training(const TrainConfig& config, const model::ModelConfig& model_config,
                       const std::vector<TspInstance>& dataset, const RunOptions& options) {
  config.validate();
  model_config.validate();
  if (dataset.empty()) throw ValidationError("empty training dataset");
  const int n = dataset.front().n();
  if (n < 5) throw ValidationError("training needs instances with n >= 5");
  for (const auto& inst : dataset) {
    if (inst.n() != n) throw ValidationError("training instances must share one size n");
    if (!inst.ref_tour) throw ValidationError("training instances must be labeled");
  }

  const DataStream stream(config, dataset.size());
  const auto needed = static_cast<std::uint64_t>(config.batch_size) *
                      static_cast<std::uint64_t>(config.total_steps);
  if (needed > stream.capacity())
    throw ValidationError(fmt::format("dataset supplies {} samples but {} steps x batch {} need {}",
                                      stream.capacity(), config.total_steps, config.batch_size,
                                      needed));

  RunResult result;
  if (options.resume) {
    if (!same_schedule(options.resume->config, config))
      throw StateMismatchError("resume state was produced with a different training config");
    if (!(options.resume->params.config == model_config))
      throw StateMismatchError("resume state holds a different model config");
    result.state = *options.resume;
    result.state.config = config;
  } else {
    result.state = {config, ModelParams::initialize(model_config, config.seed),
                    OptimizerState::zeros(model_config)};
  }
  TrainingState& st = result.state;

  if (options.out_dir) std::filesystem::create_directories(*options.out_dir);
  std::ofstream loss_csv;
  if (options.out_dir) {
    const auto path = *options.out_dir / "loss.csv";
    const bool append = options.resume.has_value() && std::filesystem::exists(path);
    loss_csv.open(path, append ? std::ios::app : std::ios::trunc);
    if (!loss_csv) throw ValidationError("cannot write " + path.string());
    if (!append) loss_csv << "step,lr,loss\n";
  }

  auto write_checkpoints = [&](bool final) {
    if (!options.out_dir) return;
    if (!final) {
      const auto path = *options.out_dir / fmt::format("ckpt_step{}.bin", st.opt.step);
      model::save_checkpoint(path, st.params);
      result.checkpoints.push_back(path);
    } else {
      const auto path = *options.out_dir / "model.bin";
      model::save_checkpoint(path, st.params);
      result.checkpoints.push_back(path);
    }
    save_training_state(*options.out_dir / "train_state.bin", st);
  };

  const std::size_t batch = static_cast<std::size_t>(config.batch_size);
  std::vector<Sample> samples(batch);
  std::vector<const TspInstance*> instances(batch);
  int ran = 0;
  while (st.opt.step < config.total_steps) {
    if (options.max_steps > 0 && ran >= options.max_steps) break;
    const std::int64_t step = st.opt.step;
    const std::uint64_t base = static_cast<std::uint64_t>(step) * batch;
    for (std::size_t j = 0; j < batch; ++j) {
      const TspInstance& inst = dataset[stream.index(base + j)];
      Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(step), j));
      instances[j] = &inst;
      samples[j] = sample_partial(*inst.ref_tour, rng, config.subpath_min);
    }
    const double lr = lr_at(config, step);
    const double loss = train_step(st.params, st.opt, instances, samples, config, options.threads);
    const LossRow row{step, lr, loss};
    result.losses.push_back(row);
    if (loss_csv.is_open()) loss_csv << fmt::format("{},{:.17g},{:.17g}\n", row.step, row.lr, row.loss);
    if (options.on_step) options.on_step(row);
    ++ran;
    if (options.checkpoint_every > 0 && st.opt.step % options.checkpoint_every == 0 &&
        st.opt.step < config.total_steps)
      write_checkpoints(false);
  }
  write_checkpoints(true);
  return result;
}

}  // namespace nco::train
