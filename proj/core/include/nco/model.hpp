#pragma once

// Decoder-only next-node predictor: linear node embedding, a stack of
// gated-attention blocks with ReZero residuals, and a masked output head.

#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "nco/autodiff.hpp"
#include "nco/instance.hpp"

namespace nco::model {

struct ModelConfig {
  int depth = 6;
  int width = 128;
  int heads = 8;
  int qkv_dim = 16;  // per head
  int ffn_dim = 512;
  bool gated_attention = true;
  bool rezero = true;

  /// Throws ValidationError unless every extent is positive and heads * qkv_dim == width.
  void validate() const;
  /// The published grid always uses ffn_dim == 4 * width.
  bool canonical() const { return ffn_dim == 4 * width; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct LinearParams {
  int in = 0;
  int out = 0;
  std::vector<double> weight;  // in x out, row-major
  std::vector<double> bias;    // out
};

struct LayerParams {
  LinearParams query, key, value, output;
  LinearParams gate;  // empty unless gated_attention
  double alpha_attn = 0.0;  // ReZero scalars, unused unless rezero
  double alpha_ffn = 0.0;
  LinearParams ffn_in, ffn_out;
};

enum class ParamRole { kWeight, kBias, kRezero };

struct ModelParams {
  ModelConfig config;
  LinearParams embed_all, embed_start, embed_current;
  std::vector<LayerParams> layers;
  LinearParams head;

  /// Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); ReZero scalars 0.
  static ModelParams initialize(const ModelConfig& config, std::uint64_t seed);
  /// Same layout with every value zero.
  static ModelParams zeros(const ModelConfig& config);

  std::size_t scalar_count() const;

  /// Visits parameter blocks in the fixed serialization order:
  /// embed_all, embed_start, embed_current, then per layer query, key, value,
  /// output, [gate], [alpha_attn, alpha_ffn], ffn_in, ffn_out, and finally
  /// head. Each linear map contributes its weight block then its bias block.
  template <typename Fn>
  void for_each_block(Fn&& fn);
  template <typename Fn>
  void for_each_block(Fn&& fn) const;

  /// Flattened copy in serialization order, and its inverse.
  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);
};

/// Exact scalar count of ModelParams for `config`.
std::int64_t param_count(const ModelConfig& config);

/// Exact count plus the N ~ c * D * W^2 approximation, with c fitted once
/// (geometric mean of N / (D W^2)) over the twelve-model grid.
struct ParamCount {
  std::int64_t exact = 0;
  double approx = 0.0;
  double c = 0.0;
};
ParamCount param_count_with_approx(const ModelConfig& config);
double fitted_param_constant();

/// The twelve configurations: depths {6,12,24,42} x widths {128,256,512}.
std::vector<ModelConfig> table_grid();
/// Grid-style shape for any depth and width: 8 heads at width 128, else 16;
/// per-head dim width / heads; ffn 4 * width.
ModelConfig grid_config(int depth, int width);

// --- construction state -----------------------------------------------------

struct ConstructionState {
  int start = 0;
  int current = 0;
  std::vector<std::uint8_t> visited;
  int step = 0;

  static ConstructionState begin(int n, int start);

  int n() const { return static_cast<int>(visited.size()); }
  int visited_count() const;
  int available_count() const { return n() - visited_count(); }
  /// Unvisited node ids in ascending order.
  std::vector<int> available() const;
  bool done() const { return available_count() == 0; }
  /// Marks `node` visited and makes it current.
  void visit(int node);
  /// Checks the state invariants; throws ValidationError on violation.
  void validate() const;
};

/// log(n_test) / log(n_train), or exactly 1.0 when the sizes agree.
double attention_scale(int n_train, int n_test);

// --- graph construction -----------------------------------------------------

/// Parameter blocks placed on a tape, either as trainable variables or as
/// constants.
struct BoundLinear {
  ad::Tensor weight, bias;
};
struct BoundLayer {
  BoundLinear query, key, value, output, gate, ffn_in, ffn_out;
  ad::Tensor alpha_attn, alpha_ffn;
};
struct BoundParams {
  ModelConfig config;
  BoundLinear embed_all, embed_start, embed_current, head;
  std::vector<BoundLayer> layers;

  static BoundParams bind(ad::Tape& tape, const ModelParams& params, bool trainable);
  /// Adds the gradients held on the tape into `grads` (same layout as the
  /// bound params), scaled by `factor`.
  void accumulate_grads(ModelParams& grads, double factor = 1.0) const;
};

/// X = [embed_start(start); embed_all(available...); embed_current(current)],
/// available rows in ascending node id. Throws if no node is available.
ad::Tensor embed(const BoundParams& p, std::span<const tsp::Point> coords,
                 const ConstructionState& state);

/// Multi-head attention (no causal mask) with scores scaled by
/// n_scale / sqrt(qkv_dim), optionally gated by sigmoid(X W_G + b_G).
ad::Tensor gated_attention_layer(const ad::Tensor& x, const BoundLayer& layer,
                                 const ModelConfig& config, double n_scale);

/// ReZero block: H = X + a1 * Attn(X); out = H + a2 * FFN(H).
/// With rezero disabled the residuals are plain sums.
ad::Tensor decoder_block(const ad::Tensor& x, const BoundLayer& layer,
                         const ModelConfig& config, double n_scale);

struct StepGraph {
  ad::Tensor hidden;  // final decoder output, s x W
  ad::Tensor logits;  // 1 x s
  ad::Mask mask;      // start and current rows masked
  std::vector<int> row_nodes;  // node id of each row
};

StepGraph build_step(const BoundParams& p, std::span<const tsp::Point> coords,
                     const ConstructionState& state, double n_scale);

// --- inference --------------------------------------------------------------

/// Inference helper that binds the parameters once and reuses the tape.
/// Not thread-safe; use one per thread. The parameters must outlive it.
class Predictor {
 public:
  Predictor(const ModelParams& params, int n_train, bool log_n_correction = true);

  /// Length-n vector: visited nodes exactly 0, available nodes sum to 1.
  std::vector<double> probabilities(std::span<const tsp::Point> coords,
                                    const ConstructionState& state);

  /// Final-layer embeddings (row-major s x W) with the node id of each row.
  std::vector<double> hidden(std::span<const tsp::Point> coords, const ConstructionState& state,
                             std::vector<int>* row_nodes = nullptr);

  const ModelParams& params() const { return params_; }
  int n_train() const { return n_train_; }

 private:
  double scale_for(int n) const;

  const ModelParams& params_;
  int n_train_;
  bool log_n_correction_;
  ad::Tape tape_;
  BoundParams bound_;
  std::size_t mark_;
};

/// One-shot forward: probability vector over all n nodes.
std::vector<double> forward(const ModelParams& params, const tsp::TspInstance& instance,
                            const ConstructionState& state, int n_train, int n_test);

// --- template definitions ---------------------------------------------------

namespace detail {
template <typename Params, typename Fn>
void visit_blocks(Params& p, Fn&& fn) {
  auto lin = [&](auto& l) {
    if (l.weight.empty()) return;
    fn(std::span(l.weight), ParamRole::kWeight);
    fn(std::span(l.bias), ParamRole::kBias);
  };
  lin(p.embed_all);
  lin(p.embed_start);
  lin(p.embed_current);
  for (auto& layer : p.layers) {
    lin(layer.query);
    lin(layer.key);
    lin(layer.value);
    lin(layer.output);
    if (p.config.gated_attention) lin(layer.gate);
    if (p.config.rezero) {
      fn(std::span(&layer.alpha_attn, 1), ParamRole::kRezero);
      fn(std::span(&layer.alpha_ffn, 1), ParamRole::kRezero);
    }
    lin(layer.ffn_in);
    lin(layer.ffn_out);
  }
  lin(p.head);
}
}  // namespace detail

template <typename Fn>
void ModelParams::for_each_block(Fn&& fn) {
  detail::visit_blocks(*this, std::forward<Fn>(fn));
}

template <typename Fn>
void ModelParams::for_each_block(Fn&& fn) const {
  detail::visit_blocks(*this, std::forward<Fn>(fn));
}

}  // namespace nco::model
