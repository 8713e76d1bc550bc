#include "nco/decoding.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "nco/error.hpp"

namespace nco::decode {

using model::ConstructionState;
using tsp::Tour;
using tsp::TspInstance;

namespace {

int argmax(const std::vector<double>& probs, const ConstructionState& state) {
  int best = -1;
  for (int i = 0; i < state.n(); ++i) {
    if (state.visited[static_cast<std::size_t>(i)]) continue;
    if (best < 0 || probs[static_cast<std::size_t>(i)] > probs[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

int draw(const std::vector<double>& probs, const ConstructionState& state, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  int last = -1;
  for (int i = 0; i < state.n(); ++i) {
    if (state.visited[static_cast<std::size_t>(i)]) continue;
    last = i;
    acc += probs[static_cast<std::size_t>(i)];
    if (u < acc) return i;
  }
  return last;
}

void require_size(const TspInstance& instance) {
  if (instance.n() < 2) throw ValidationError("decoding needs n >= 2");
}

Tour finish(const TspInstance& instance, std::vector<int> order) {
  Tour t;
  t.cost = tsp::tour_cost(instance, order);
  t.order = std::move(order);
  return t;
}

}  // namespace

std::vector<int> complete(model::Predictor& predictor, std::span<const tsp::Point> coords,
                          ConstructionState state, InnerDecoder inner, Rng* rng) {
  if (inner == InnerDecoder::kSample && rng == nullptr)
    throw ValidationError("sampled completion needs an rng");
  std::vector<int> appended;
  appended.reserve(static_cast<std::size_t>(state.available_count()));
  while (!state.done()) {
    const auto probs = predictor.probabilities(coords, state);
    const int next = inner == InnerDecoder::kGreedy ? argmax(probs, state) : draw(probs, state, *rng);
    state.visit(next);
    appended.push_back(next);
  }
  return appended;
}

Tour greedy(model::Predictor& predictor, const TspInstance& instance) {
  require_size(instance);
  std::vector<int> order{0};
  const auto rest = complete(predictor, instance.coords, ConstructionState::begin(instance.n(), 0),
                             InnerDecoder::kGreedy, nullptr);
  order.insert(order.end(), rest.begin(), rest.end());
  return finish(instance, std::move(order));
}

Tour sample(model::Predictor& predictor, const TspInstance& instance, Rng& rng) {
  require_size(instance);
  std::vector<int> order{0};
  const auto rest = complete(predictor, instance.coords, ConstructionState::begin(instance.n(), 0),
                             InnerDecoder::kSample, &rng);
  order.insert(order.end(), rest.begin(), rest.end());
  return finish(instance, std::move(order));
}

Tour beam(model::Predictor& predictor, const TspInstance& instance, int beam_width) {
  require_size(instance);
  if (beam_width < 1) throw ValidationError("beam width must be >= 1");
  const int n = instance.n();

  struct Candidate {
    double total;
    std::size_t parent;
    double prob;
    int node;
  };

  std::vector<BeamEntry> frontier(1);
  frontier[0].state = ConstructionState::begin(n, 0);
  frontier[0].sequence = {0};
  for (int step = 1; step < n; ++step) {
    std::vector<Candidate> candidates;
    for (std::size_t e = 0; e < frontier.size(); ++e) {
      const auto probs = predictor.probabilities(instance.coords, frontier[e].state);
      for (int i = 0; i < n; ++i) {
        if (frontier[e].state.visited[static_cast<std::size_t>(i)]) continue;
        const double p = probs[static_cast<std::size_t>(i)];
        candidates.push_back({frontier[e].score + std::log(p), e, p, i});
      }
    }
    const std::size_t keep = std::min(candidates.size(), static_cast<std::size_t>(beam_width));
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), [](const Candidate& a, const Candidate& b) {
                        if (a.total != b.total) return a.total > b.total;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        if (a.prob != b.prob) return a.prob > b.prob;
                        return a.node < b.node;
                      });
    std::vector<BeamEntry> next;
    next.reserve(keep);
    for (std::size_t k = 0; k < keep; ++k) {
      const Candidate& c = candidates[k];
      BeamEntry entry = frontier[c.parent];
      const int prev = entry.sequence.back();
      entry.cost_so_far += tsp::distance(instance.coords[static_cast<std::size_t>(prev)],
                                         instance.coords[static_cast<std::size_t>(c.node)]);
      entry.state.visit(c.node);
      entry.sequence.push_back(c.node);
      entry.score = c.total;
      next.push_back(std::move(entry));
    }
    frontier = std::move(next);
  }

  std::size_t best = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < frontier.size(); ++e) {
    const double cost = tsp::tour_cost(instance, frontier[e].sequence);
    if (cost < best_cost) {
      best_cost = cost;
      best = e;
    }
  }
  return finish(instance, frontier[best].sequence);
}

void RrcConfig::validate() const {
  if (iterations < 0) throw ValidationError("rrc iterations must be >= 0");
  if (segment_min < 4) throw ValidationError("rrc segment_min must be >= 4");
  if (!(segment_max_frac > 0.0 && segment_max_frac <= 1.0))
    throw ValidationError("rrc segment_max_frac must be in (0, 1]");
}

RrcResult rrc(model::Predictor& predictor, const TspInstance& instance, const Tour& initial,
              const RrcConfig& config) {
  config.validate();
  const int n = instance.n();
  if (!tsp::is_permutation(initial.order, n)) throw ValidationError("rrc initial tour is invalid");
  RrcResult result;
  result.tour.order = initial.order;
  result.tour.cost = tsp::tour_cost(instance, initial.order);
  if (n < config.segment_min) {
    result.cost_trace.assign(static_cast<std::size_t>(config.iterations), result.tour.cost);
    return result;
  }
  const int seg_max = std::min(
      n, std::max(config.segment_min, static_cast<int>(std::floor(config.segment_max_frac * n))));
  Rng rng(config.seed);
  for (int it = 0; it < config.iterations; ++it) {
    const std::vector<int>& tour = result.tour.order;
    const int len = rng.uniform_int(config.segment_min, seg_max);
    const int p = rng.uniform_int(0, n - 1);
    auto at = [&](int k) { return tour[static_cast<std::size_t>((p + k) % n)]; };

    // Visited path runs from the segment's last node around to its first.
    std::vector<int> order;
    order.reserve(static_cast<std::size_t>(n));
    auto state = ConstructionState::begin(n, at(len - 1));
    order.push_back(at(len - 1));
    for (int k = len; k < n; ++k) {
      state.visit(at(k));
      order.push_back(at(k));
    }
    state.visit(at(0));
    order.push_back(at(0));

    const auto rebuilt = complete(predictor, instance.coords, state, config.inner, &rng);
    order.insert(order.end(), rebuilt.begin(), rebuilt.end());
    const double cost = tsp::tour_cost(instance, order);
    if (cost < result.tour.cost) {
      result.tour.order = tsp::rotate_to_zero(order);
      result.tour.cost = cost;
      ++result.accepted;
    }
    result.cost_trace.push_back(result.tour.cost);
  }
  return result;
}

DecodeSpec parse_decode_spec(std::string_view text, std::uint64_t seed) {
  DecodeSpec spec;
  spec.seed = seed;
  auto number = [&](std::string_view s) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
      throw ValidationError(fmt::format("bad number in decode spec '{}'", text));
    return v;
  };
  if (text == "greedy") {
    spec.strategy = Strategy::kGreedy;
  } else if (text == "sample") {
    spec.strategy = Strategy::kSample;
  } else if (text == "reference") {
    spec.strategy = Strategy::kReference;
  } else if (text.starts_with("beam:")) {
    spec.strategy = Strategy::kBeam;
    spec.beam_width = number(text.substr(5));
    if (spec.beam_width < 1) throw ValidationError("beam width must be >= 1");
  } else if (text.starts_with("rrc:")) {
    spec.strategy = Strategy::kRrc;
    spec.rrc_iterations = number(text.substr(4));
    if (spec.rrc_iterations < 0) throw ValidationError("rrc iterations must be >= 0");
  } else {
    throw ValidationError(fmt::format(
        "unknown decode strategy '{}' (expected greedy, beam:K, rrc:K, sample, reference)", text));
  }
  return spec;
}

std::string to_string(const DecodeSpec& spec) {
  switch (spec.strategy) {
    case Strategy::kGreedy: return "greedy";
    case Strategy::kSample: return "sample";
    case Strategy::kReference: return "reference";
    case Strategy::kBeam: return fmt::format("beam:{}", spec.beam_width);
    case Strategy::kRrc: return fmt::format("rrc:{}", spec.rrc_iterations);
  }
  return "greedy";
}

Tour run(model::Predictor& predictor, const TspInstance& instance, const DecodeSpec& spec,
         std::uint64_t index) {
  switch (spec.strategy) {
    case Strategy::kGreedy:
      return greedy(predictor, instance);
    case Strategy::kBeam:
      return beam(predictor, instance, spec.beam_width);
    case Strategy::kSample: {
      Rng rng(derive_seed(spec.seed, index));
      return sample(predictor, instance, rng);
    }
    case Strategy::kRrc: {
      const Tour start = greedy(predictor, instance);
      RrcConfig cfg;
      cfg.iterations = spec.rrc_iterations;
      cfg.seed = derive_seed(spec.seed, index);
      return rrc(predictor, instance, start, cfg).tour;
    }
    case Strategy::kReference: {
      if (!instance.ref_tour) throw ValidationError("reference decoding needs a labeled instance");
      return finish(instance, *instance.ref_tour);
    }
  }
  throw ValidationError("unknown decode strategy");
}

}  // namespace nco::decode
