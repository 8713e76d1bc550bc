#include "nco/model.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "nco/error.hpp"
#include "nco/rng.hpp"

namespace nco::model {

using ad::Tensor;

void ModelConfig::validate() const {
  if (depth <= 0 || width <= 0 || heads <= 0 || qkv_dim <= 0 || ffn_dim <= 0)
    throw ValidationError(fmt::format(
        "model extents must be positive (depth={}, width={}, heads={}, qkv_dim={}, ffn_dim={})",
        depth, width, heads, qkv_dim, ffn_dim));
  if (heads * qkv_dim != width)
    throw ValidationError(fmt::format("heads * qkv_dim must equal width ({} * {} != {})", heads,
                                      qkv_dim, width));
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"depth", c.depth},
                     {"width", c.width},
                     {"heads", c.heads},
                     {"qkv_dim", c.qkv_dim},
                     {"ffn_dim", c.ffn_dim},
                     {"gated_attention", c.gated_attention},
                     {"rezero", c.rezero}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.depth = j.value("depth", d.depth);
  c.width = j.value("width", d.width);
  c.heads = j.value("heads", d.heads);
  c.qkv_dim = j.value("qkv_dim", d.qkv_dim);
  c.ffn_dim = j.value("ffn_dim", 4 * c.width);
  c.gated_attention = j.value("gated_attention", d.gated_attention);
  c.rezero = j.value("rezero", d.rezero);
}

// --- parameters -------------------------------------------------------------

namespace {

LinearParams make_linear(int in, int out) {
  LinearParams l;
  l.in = in;
  l.out = out;
  l.weight.assign(static_cast<std::size_t>(in) * static_cast<std::size_t>(out), 0.0);
  l.bias.assign(static_cast<std::size_t>(out), 0.0);
  return l;
}

ModelParams make_layout(const ModelConfig& config) {
  config.validate();
  const int w = config.width;
  ModelParams p;
  p.config = config;
  p.embed_all = make_linear(2, w);
  p.embed_start = make_linear(2, w);
  p.embed_current = make_linear(2, w);
  p.layers.resize(static_cast<std::size_t>(config.depth));
  for (auto& layer : p.layers) {
    layer.query = make_linear(w, w);
    layer.key = make_linear(w, w);
    layer.value = make_linear(w, w);
    layer.output = make_linear(w, w);
    if (config.gated_attention) layer.gate = make_linear(w, w);
    layer.ffn_in = make_linear(w, config.ffn_dim);
    layer.ffn_out = make_linear(config.ffn_dim, w);
  }
  p.head = make_linear(w, 1);
  return p;
}

}  // namespace

ModelParams ModelParams::zeros(const ModelConfig& config) { return make_layout(config); }

ModelParams ModelParams::initialize(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p = make_layout(config);
  Rng rng(derive_seed(seed, 0x1417ULL));
  auto init = [&](LinearParams& l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
    for (auto& v : l.weight) v = rng.uniform(-bound, bound);
    for (auto& v : l.bias) v = rng.uniform(-bound, bound);
  };
  init(p.embed_all);
  init(p.embed_start);
  init(p.embed_current);
  for (auto& layer : p.layers) {
    init(layer.query);
    init(layer.key);
    init(layer.value);
    init(layer.output);
    if (config.gated_attention) init(layer.gate);
    init(layer.ffn_in);
    init(layer.ffn_out);
    layer.alpha_attn = 0.0;
    layer.alpha_ffn = 0.0;
  }
  init(p.head);
  return p;
}

std::size_t ModelParams::scalar_count() const {
  std::size_t n = 0;
  for_each_block([&](std::span<const double> block, ParamRole) { n += block.size(); });
  return n;
}

std::vector<double> ModelParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(scalar_count());
  for_each_block([&](std::span<const double> block, ParamRole) {
    flat.insert(flat.end(), block.begin(), block.end());
  });
  return flat;
}

void ModelParams::assign(std::span<const double> flat) {
  if (flat.size() != scalar_count())
    throw ShapeError(fmt::format("expected {} parameters, got {}", scalar_count(), flat.size()));
  std::size_t offset = 0;
  for_each_block([&](std::span<double> block, ParamRole) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), block.size(), block.begin());
    offset += block.size();
  });
}

std::int64_t param_count(const ModelConfig& config) {
  config.validate();
  const std::int64_t w = config.width, f = config.ffn_dim;
  const std::int64_t linear_ww = w * w + w;
  std::int64_t per_layer = 4 * linear_ww + (w * f + f) + (f * w + w);
  if (config.gated_attention) per_layer += linear_ww;
  if (config.rezero) per_layer += 2;
  const std::int64_t embed = 3 * (2 * w + w);
  const std::int64_t head = w + 1;
  return embed + config.depth * per_layer + head;
}

ModelConfig grid_config(int depth, int width) {
  ModelConfig c;
  c.depth = depth;
  c.width = width;
  c.heads = width <= 128 ? 8 : 16;
  if (width % c.heads != 0) throw ValidationError(fmt::format("width {} is not divisible by {} heads", width, c.heads));
  c.qkv_dim = width / c.heads;
  c.ffn_dim = 4 * width;
  c.validate();
  return c;
}

std::vector<ModelConfig> table_grid() {
  std::vector<ModelConfig> grid;
  for (int depth : {6, 12, 24, 42}) {
    for (int width : {128, 256, 512}) grid.push_back(grid_config(depth, width));
  }
  return grid;
}

double fitted_param_constant() {
  static const double c = [] {
    double acc = 0.0;
    const auto grid = table_grid();
    for (const auto& cfg : grid) {
      const double dw2 = static_cast<double>(cfg.depth) * cfg.width * cfg.width;
      acc += std::log(static_cast<double>(param_count(cfg)) / dw2);
    }
    return std::exp(acc / static_cast<double>(grid.size()));
  }();
  return c;
}

ParamCount param_count_with_approx(const ModelConfig& config) {
  ParamCount pc;
  pc.exact = param_count(config);
  pc.c = fitted_param_constant();
  pc.approx = pc.c * config.depth * static_cast<double>(config.width) * config.width;
  return pc;
}

// --- construction state -----------------------------------------------------

ConstructionState ConstructionState::begin(int n, int start) {
  if (n < 1 || start < 0 || start >= n)
    throw ValidationError(fmt::format("invalid start node {} for n={}", start, n));
  ConstructionState s;
  s.start = start;
  s.current = start;
  s.visited.assign(static_cast<std::size_t>(n), 0);
  s.visited[static_cast<std::size_t>(start)] = 1;
  s.step = 0;
  return s;
}

int ConstructionState::visited_count() const {
  return static_cast<int>(std::count(visited.begin(), visited.end(), std::uint8_t{1}));
}

std::vector<int> ConstructionState::available() const {
  std::vector<int> out;
  out.reserve(visited.size());
  for (int i = 0; i < n(); ++i)
    if (!visited[static_cast<std::size_t>(i)]) out.push_back(i);
  return out;
}

void ConstructionState::visit(int node) {
  if (node < 0 || node >= n() || visited[static_cast<std::size_t>(node)])
    throw ValidationError(fmt::format("cannot visit node {}", node));
  visited[static_cast<std::size_t>(node)] = 1;
  current = node;
  ++step;
}

void ConstructionState::validate() const {
  const int nn = n();
  if (start < 0 || start >= nn || current < 0 || current >= nn)
    throw ValidationError("construction state: start/current out of range");
  if (!visited[static_cast<std::size_t>(start)] || !visited[static_cast<std::size_t>(current)])
    throw ValidationError("construction state: start and current must be visited");
  if (visited_count() != step + 1)
    throw ValidationError(
        fmt::format("construction state: {} visited at step {}", visited_count(), step));
}

double attention_scale(int n_train, int n_test) {
  if (n_train < 2 || n_test < 2)
    throw ValidationError(fmt::format("attention_scale needs n >= 2 (n_train={}, n_test={})",
                                      n_train, n_test));
  if (n_train == n_test) return 1.0;
  return std::log(static_cast<double>(n_test)) / std::log(static_cast<double>(n_train));
}

// --- graph construction -----------------------------------------------------

namespace {

BoundLinear bind_linear(ad::Tape& tape, const LinearParams& l, bool trainable) {
  if (l.weight.empty()) return {};
  auto make = [&](ad::Shape shape, const std::vector<double>& v) {
    return trainable ? tape.variable(std::move(shape), v) : tape.constant(std::move(shape), v);
  };
  return {make({static_cast<std::size_t>(l.in), static_cast<std::size_t>(l.out)}, l.weight),
          make({static_cast<std::size_t>(l.out)}, l.bias)};
}

Tensor bind_scalar(ad::Tape& tape, double v, bool trainable) {
  return trainable ? tape.variable({1}, {v}) : tape.constant({1}, {v});
}

void add_grad(std::vector<double>& dst, const Tensor& t, double factor) {
  if (!t.valid() || !t.requires_grad()) return;
  const auto g = t.grad();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * g[i];
}

void add_linear_grad(LinearParams& dst, const BoundLinear& b, double factor) {
  if (dst.weight.empty()) return;
  add_grad(dst.weight, b.weight, factor);
  add_grad(dst.bias, b.bias, factor);
}

Tensor apply(const BoundLinear& l, const Tensor& x) { return ad::linear(x, l.weight, l.bias); }

}  // namespace

BoundParams BoundParams::bind(ad::Tape& tape, const ModelParams& params, bool trainable) {
  BoundParams b;
  b.config = params.config;
  b.embed_all = bind_linear(tape, params.embed_all, trainable);
  b.embed_start = bind_linear(tape, params.embed_start, trainable);
  b.embed_current = bind_linear(tape, params.embed_current, trainable);
  b.layers.reserve(params.layers.size());
  for (const auto& layer : params.layers) {
    BoundLayer bl;
    bl.query = bind_linear(tape, layer.query, trainable);
    bl.key = bind_linear(tape, layer.key, trainable);
    bl.value = bind_linear(tape, layer.value, trainable);
    bl.output = bind_linear(tape, layer.output, trainable);
    bl.gate = bind_linear(tape, layer.gate, trainable);
    if (params.config.rezero) {
      bl.alpha_attn = bind_scalar(tape, layer.alpha_attn, trainable);
      bl.alpha_ffn = bind_scalar(tape, layer.alpha_ffn, trainable);
    }
    bl.ffn_in = bind_linear(tape, layer.ffn_in, trainable);
    bl.ffn_out = bind_linear(tape, layer.ffn_out, trainable);
    b.layers.push_back(bl);
  }
  b.head = bind_linear(tape, params.head, trainable);
  return b;
}

void BoundParams::accumulate_grads(ModelParams& grads, double factor) const {
  add_linear_grad(grads.embed_all, embed_all, factor);
  add_linear_grad(grads.embed_start, embed_start, factor);
  add_linear_grad(grads.embed_current, embed_current, factor);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& dst = grads.layers[i];
    const auto& src = layers[i];
    add_linear_grad(dst.query, src.query, factor);
    add_linear_grad(dst.key, src.key, factor);
    add_linear_grad(dst.value, src.value, factor);
    add_linear_grad(dst.output, src.output, factor);
    add_linear_grad(dst.gate, src.gate, factor);
    if (src.alpha_attn.valid() && src.alpha_attn.requires_grad())
      dst.alpha_attn += factor * src.alpha_attn.grad()[0];
    if (src.alpha_ffn.valid() && src.alpha_ffn.requires_grad())
      dst.alpha_ffn += factor * src.alpha_ffn.grad()[0];
    add_linear_grad(dst.ffn_in, src.ffn_in, factor);
    add_linear_grad(dst.ffn_out, src.ffn_out, factor);
  }
  add_linear_grad(grads.head, head, factor);
}

Tensor embed(const BoundParams& p, std::span<const tsp::Point> coords,
             const ConstructionState& state) {
  if (static_cast<int>(coords.size()) != state.n())
    throw ShapeError(fmt::format("state covers {} nodes, instance has {}", state.n(), coords.size()));
  const auto avail = state.available();
  if (avail.empty()) throw ValidationError("embed: no available node (terminal state)");
  ad::Tape& tape = p.embed_all.weight.tape();

  auto point_row = [&](int node) {
    const auto& pt = coords[static_cast<std::size_t>(node)];
    return tape.constant({1, 2}, {pt.x, pt.y});
  };
  std::vector<double> avail_xy;
  avail_xy.reserve(avail.size() * 2);
  for (int node : avail) {
    avail_xy.push_back(coords[static_cast<std::size_t>(node)].x);
    avail_xy.push_back(coords[static_cast<std::size_t>(node)].y);
  }
  const Tensor parts[] = {
      apply(p.embed_start, point_row(state.start)),
      apply(p.embed_all, tape.constant({avail.size(), 2}, std::move(avail_xy))),
      apply(p.embed_current, point_row(state.current)),
  };
  return ad::concat_rows(parts);
}

Tensor gated_attention_layer(const Tensor& x, const BoundLayer& layer, const ModelConfig& config,
                             double n_scale) {
  if (!(n_scale > 0.0)) throw ValidationError("attention n_scale must be positive");
  const Tensor q = apply(layer.query, x);
  const Tensor k = apply(layer.key, x);
  const Tensor v = apply(layer.value, x);
  const auto dk = static_cast<std::size_t>(config.qkv_dim);
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(config.qkv_dim));

  std::vector<Tensor> heads;
  heads.reserve(static_cast<std::size_t>(config.heads));
  for (std::size_t h = 0; h < static_cast<std::size_t>(config.heads); ++h) {
    const Tensor qh = ad::slice_cols(q, h * dk, dk);
    const Tensor kh = ad::slice_cols(k, h * dk, dk);
    const Tensor vh = ad::slice_cols(v, h * dk, dk);
    Tensor scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_sqrt_dk);
    // Skipped when 1.0 so same-size inference is bit-identical to training.
    if (n_scale != 1.0) scores = ad::scale(scores, n_scale);
    heads.push_back(ad::matmul(ad::softmax(scores), vh));
  }
  Tensor out = apply(layer.output, ad::concat_cols(heads));
  if (config.gated_attention) out = ad::hadamard(out, ad::sigmoid(apply(layer.gate, x)));
  return out;
}

Tensor decoder_block(const Tensor& x, const BoundLayer& layer, const ModelConfig& config,
                     double n_scale) {
  const Tensor attn = gated_attention_layer(x, layer, config, n_scale);
  const Tensor h = config.rezero ? ad::add(x, ad::scale(attn, layer.alpha_attn)) : ad::add(x, attn);
  const Tensor ffn = apply(layer.ffn_out, ad::relu(apply(layer.ffn_in, h)));
  return config.rezero ? ad::add(h, ad::scale(ffn, layer.alpha_ffn)) : ad::add(h, ffn);
}

StepGraph build_step(const BoundParams& p, std::span<const tsp::Point> coords,
                     const ConstructionState& state, double n_scale) {
  StepGraph g;
  Tensor h = embed(p, coords, state);
  for (const auto& layer : p.layers) h = decoder_block(h, layer, p.config, n_scale);
  g.hidden = h;
  const std::size_t s = h.rows();
  g.logits = ad::reshape(apply(p.head, h), {1, s});
  g.mask.assign(s, 1);
  g.mask.front() = 0;
  g.mask.back() = 0;
  g.row_nodes.reserve(s);
  g.row_nodes.push_back(state.start);
  for (int node : state.available()) g.row_nodes.push_back(node);
  g.row_nodes.push_back(state.current);
  return g;
}

// --- inference --------------------------------------------------------------

Predictor::Predictor(const ModelParams& params, int n_train, bool log_n_correction)
    : params_(params), n_train_(n_train), log_n_correction_(log_n_correction) {
  if (n_train < 2) throw ValidationError("n_train must be >= 2");
  bound_ = BoundParams::bind(tape_, params, false);
  mark_ = tape_.size();
}

double Predictor::scale_for(int n) const {
  return log_n_correction_ ? attention_scale(n_train_, n) : 1.0;
}

std::vector<double> Predictor::probabilities(std::span<const tsp::Point> coords,
                                             const ConstructionState& state) {
  const StepGraph g = build_step(bound_, coords, state, scale_for(state.n()));
  const Tensor p = ad::masked_softmax(g.logits, g.mask);
  std::vector<double> probs(static_cast<std::size_t>(state.n()), 0.0);
  for (std::size_t r = 1; r + 1 < g.row_nodes.size(); ++r)
    probs[static_cast<std::size_t>(g.row_nodes[r])] = p.value(r);
  tape_.truncate(mark_);
  return probs;
}

std::vector<double> Predictor::hidden(std::span<const tsp::Point> coords,
                                      const ConstructionState& state,
                                      std::vector<int>* row_nodes) {
  const StepGraph g = build_step(bound_, coords, state, scale_for(state.n()));
  std::vector<double> out(g.hidden.values().begin(), g.hidden.values().end());
  if (row_nodes) *row_nodes = g.row_nodes;
  tape_.truncate(mark_);
  return out;
}

std::vector<double> forward(const ModelParams& params, const tsp::TspInstance& instance,
                            const ConstructionState& state, int n_train, int n_test) {
  if (n_test != instance.n())
    throw ValidationError(fmt::format("n_test {} differs from instance size {}", n_test, instance.n()));
  Predictor predictor(params, n_train);
  return predictor.probabilities(instance.coords, state);
}

}  // namespace nco::model
