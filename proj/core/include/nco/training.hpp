#pragma once

// Supervised next-node training on partial reference tours with AdamW and a
// step-decayed learning rate.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "nco/instance.hpp"
#include "nco/model.hpp"
#include "nco/rng.hpp"

namespace nco::train {

enum class DataMode { kSinglePass, kEpochs };

struct TrainConfig {
  int batch_size = 1024;
  int total_steps = 60000;
  double lr0 = 1.25e-4;
  double decay_gamma = 0.997;
  int decay_every = 100;
  double weight_decay = 0.01;
  std::optional<double> grad_clip;  // global L2 norm; off by default
  std::uint64_t seed = 1;
  DataMode mode = DataMode::kSinglePass;
  int epochs = 1;  // used in kEpochs mode

  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int subpath_min = 4;  // shortest sampled sub-path, in nodes
  int chunk_size = 8;   // samples per gradient chunk

  /// Small-machine preset: batch 64, 5000 steps, larger learning rate.
  static TrainConfig desk();

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// lr0 * gamma^floor(step / decay_every).
double lr_at(const TrainConfig& config, std::int64_t step);

struct Sample {
  model::ConstructionState state;
  int target = 0;
};

/// Picks an orientation of the reference cycle (p = 0.5), a start offset,
/// and a sub-path length l ~ U{subpath_min..n}. The first l-1 nodes of the
/// sub-path are visited, start is its first node, current its (l-1)-th, and
/// the target is its l-th node. The model sees the full instance.
Sample sample_partial(std::span<const int> tour, Rng& rng, int subpath_min = 4);

/// -log p(target | state) as a scalar on the tape of `params`.
ad::Tensor sample_nll(const model::BoundParams& params, const tsp::TspInstance& instance,
                      const Sample& sample);

/// Mean NLL of (instance, sample) pairs, forward only.
double evaluate_loss(const model::ModelParams& params, std::span<const tsp::TspInstance> instances,
                     std::span<const Sample> samples);

struct OptimizerState {
  model::ModelParams m;
  model::ModelParams v;
  std::int64_t step = 0;

  static OptimizerState zeros(const model::ModelConfig& config);
};

/// AdamW update in place. Decay skips biases and ReZero scalars.
void adamw_update(model::ModelParams& params, OptimizerState& opt, const model::ModelParams& grads,
                  const TrainConfig& config, double lr);

/// Batch gradient of the mean loss. Samples are split into fixed chunks of
/// config.chunk_size, each on its own tape, and the chunk gradients are summed
/// in chunk order, so the result does not depend on `threads`.
struct BatchGradient {
  model::ModelParams grads;
  double loss = 0.0;
};
BatchGradient batch_gradient(const model::ModelParams& params,
                             std::span<const tsp::TspInstance* const> instances,
                             std::span<const Sample> samples, const TrainConfig& config,
                             int threads);

/// One forward/backward/update. Throws NumericalError on a non-finite loss.
double train_step(model::ModelParams& params, OptimizerState& opt,
                  std::span<const tsp::TspInstance* const> instances,
                  std::span<const Sample> samples, const TrainConfig& config, int threads);

/// Everything needed to resume bit-exactly.
struct TrainingState {
  TrainConfig config;
  model::ModelParams params;
  OptimizerState opt;
};

void write_training_state(std::ostream& out, const TrainingState& state);
TrainingState read_training_state(std::istream& in);
void save_training_state(const std::filesystem::path& path, const TrainingState& state);
TrainingState load_training_state(const std::filesystem::path& path);

/// Order in which dataset records are consumed. Single-pass reads the file
/// in order; epoch mode reshuffles each epoch from the seed.
class DataStream {
 public:
  DataStream(const TrainConfig& config, std::uint64_t dataset_size);

  /// Dataset index of global sample position `pos`.
  std::uint64_t index(std::uint64_t pos) const;
  std::uint64_t capacity() const { return capacity_; }

 private:
  DataMode mode_;
  std::uint64_t seed_;
  std::uint64_t size_;
  std::uint64_t capacity_;
  mutable std::int64_t cached_epoch_ = -1;
  mutable std::vector<std::uint64_t> perm_;
};

/// Steps that fit `epochs` passes over `dataset_size` records.
int steps_for_epochs(std::uint64_t dataset_size, int batch_size, int epochs);

struct LossRow {
  std::int64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct RunOptions {
  int threads = 1;
  int checkpoint_every = 0;  // 0 = only the final checkpoint
  std::optional<std::filesystem::path> out_dir;
  std::optional<TrainingState> resume;
  /// Stop after this many steps in this call (for resume tests); 0 = run to the end.
  int max_steps = 0;
  std::function<void(const LossRow&)> on_step;
};

struct RunResult {
  TrainingState state;
  std::vector<LossRow> losses;
  std::vector<std::filesystem::path> checkpoints;
};

/// Trains from fresh init (seeded by config.seed) or from options.resume.
/// Every instance must carry a reference tour and share one n >= 5.
/// Writes loss.csv, ckpt_stepN.bin, model.bin and train_state.bin under
/// out_dir when set.
RunResult run_training(const TrainConfig& config, const model::ModelConfig& model_config,
                       const std::vector<tsp::TspInstance>& dataset, const RunOptions& options);

void write_loss_csv(std::ostream& out, std::span<const LossRow> rows);

}  // namespace nco::train
