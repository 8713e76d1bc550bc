#pragma once

// Tour construction over a trained model: greedy, sampling, beam search and
// random reconstruction (RRC).

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "nco/instance.hpp"
#include "nco/model.hpp"
#include "nco/rng.hpp"

namespace nco::decode {

/// Starts at node 0 and takes the most probable node each step (ties go to
/// the lowest node id). Requires n >= 2.
tsp::Tour greedy(model::Predictor& predictor, const tsp::TspInstance& instance);

/// Starts at node 0 and samples each step from the model distribution.
tsp::Tour sample(model::Predictor& predictor, const tsp::TspInstance& instance, Rng& rng);

struct BeamEntry {
  model::ConstructionState state;
  std::vector<int> sequence;
  double score = 0.0;  // cumulative log-probability
  double cost_so_far = 0.0;
};

/// Keeps the top `beam` partial sequences by cumulative log-probability and
/// returns the cheapest completed tour in the final beam. beam == 1 gives the
/// greedy tour exactly.
tsp::Tour beam(model::Predictor& predictor, const tsp::TspInstance& instance, int beam_width);

enum class InnerDecoder { kGreedy, kSample };

struct RrcConfig {
  int iterations = 0;
  int segment_min = 4;
  double segment_max_frac = 0.5;
  InnerDecoder inner = InnerDecoder::kGreedy;
  std::uint64_t seed = 0;

  void validate() const;
};

struct RrcResult {
  tsp::Tour tour;
  /// Cost after each iteration; never increases.
  std::vector<double> cost_trace;
  int accepted = 0;
};

/// Each iteration picks a segment of length l in [segment_min,
/// max(segment_min, floor(segment_max_frac n))] starting at a random
/// position, keeps the rest of the cycle as the visited path (start = the
/// segment's last node, current = its first), rebuilds the interior with the
/// model, and accepts the result only when its cost strictly decreases.
/// Accepted tours are rotated to start at node 0.
RrcResult rrc(model::Predictor& predictor, const tsp::TspInstance& instance,
              const tsp::Tour& initial, const RrcConfig& config);

/// Finishes a partial construction with the model (greedy or sampled) and
/// returns the nodes appended after the current node.
std::vector<int> complete(model::Predictor& predictor, std::span<const tsp::Point> coords,
                          model::ConstructionState state, InnerDecoder inner, Rng* rng);

// --- strategy selection -----------------------------------------------------

enum class Strategy { kGreedy, kBeam, kRrc, kSample, kReference };

struct DecodeSpec {
  Strategy strategy = Strategy::kGreedy;
  int beam_width = 1;      // kBeam
  int rrc_iterations = 0;  // kRrc, starting from the greedy tour
  std::uint64_t seed = 0;

  /// Multiplier applied to model FLOPs per solution.
  int beam_factor() const { return strategy == Strategy::kBeam ? beam_width : 1; }
};

/// Parses "greedy", "beam:K", "rrc:K", "sample" or "reference".
DecodeSpec parse_decode_spec(std::string_view text, std::uint64_t seed = 0);
std::string to_string(const DecodeSpec& spec);

/// Decodes instance number `index` of a set. kReference returns the stored
/// reference tour and needs a labeled instance. Randomized strategies derive
/// their stream from (spec.seed, index).
tsp::Tour run(model::Predictor& predictor, const tsp::TspInstance& instance,
              const DecodeSpec& spec, std::uint64_t index);

}  // namespace nco::decode
