#pragma once

// Evaluation over instance sets and the embedding diagnostics:
// long-sightedness by neighbor rank, cosine maps and 2D PCA.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "nco/decoding.hpp"
#include "nco/instance.hpp"
#include "nco/model.hpp"
#include "nco/records.hpp"

namespace nco::analysis {

struct InstanceResult {
  std::uint64_t index = 0;
  tsp::Tour tour;
  double ref_cost = 0.0;
  double gap = 0.0;  // percent
  double wall_seconds = 0.0;
};

struct Evaluation {
  std::string decode;
  std::vector<InstanceResult> rows;
  double mean_gap = 0.0;
  double total_wall_seconds = 0.0;
  double gflops_per_solution = 0.0;
};

/// Decodes every instance and scores it against its reference. TSPLIB
/// instances are scored with rounded edge weights on raw coordinates, so a
/// known optimum (ref_cost without a tour) is enough for them. Throws
/// ValidationError on an instance without a positive reference cost.
/// Results do not depend on `threads` (wall times aside).
Evaluation evaluate(const model::ModelParams& params, int n_train,
                    const std::vector<tsp::TspInstance>& instances, const decode::DecodeSpec& spec,
                    int threads, bool log_n_correction = true);

records::EvalRecord to_record(const Evaluation& eval, const model::ModelConfig& config,
                              const std::string& dataset, int n, double samples_seen);

/// instance,cost,ref_cost,gap,tour with the tour as space-separated node ids.
void write_tours_csv(std::ostream& out, const Evaluation& eval);
/// instance,wall_seconds
void write_timing_csv(std::ostream& out, const Evaluation& eval);

// --- long-sightedness -------------------------------------------------------

/// 1-based rank of `node` among available nodes ordered by distance from the
/// current node, ties broken by node id.
int neighbor_rank(std::span<const tsp::Point> coords, const model::ConstructionState& state, int node);

/// Chooses the next node given the instance, the state and the reference
/// next node (which only an oracle should look at).
using Policy = std::function<int(const tsp::TspInstance&, const model::ConstructionState&, int optimal)>;
/// Builds one policy per worker.
using PolicyFactory = std::function<Policy()>;

PolicyFactory model_policy(const model::ModelParams& params, int n_train);
PolicyFactory oracle_policy();
PolicyFactory nearest_policy();

struct RankBucket {
  std::int64_t attempts = 0;
  std::int64_t successes = 0;
  double rate() const { return attempts == 0 ? 0.0 : static_cast<double>(successes) / attempts; }
};

struct LongSightReport {
  int k = 10;
  /// buckets[r - 1] for ranks 1..k; buckets[k] pools every rank above k.
  std::vector<RankBucket> buckets;
  std::int64_t total_attempts() const;
  /// Mean of per-bucket rates over buckets whose rank exceeds `rank` and
  /// that have attempts.
  double mean_rate_above(int rank) const;
};

/// Walks each reference tour from its first node; every step with at least
/// two available nodes is one attempt, bucketed by the neighbor rank of the
/// reference next node, and succeeds when the policy picks that node.
LongSightReport long_sightedness(const std::vector<tsp::TspInstance>& instances, int k,
                                 const PolicyFactory& policy, int threads);

void write_longsight_csv(std::ostream& out, const LongSightReport& report);

// --- embeddings -------------------------------------------------------------

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major

  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct EmbeddingSnapshot {
  int step = 0;
  std::vector<int> context_nodes;  // start, current
  Matrix context;                  // 2 x W
  /// Available nodes in the order the reference tour visits them next.
  std::vector<int> nodes;
  Matrix available;  // one row per entry of `nodes`
  std::vector<bool> is_next;  // true for the reference next node
};

/// Final-layer embeddings after `step` nodes of the reference tour have been
/// visited (1 <= step <= n - 1).
EmbeddingSnapshot snapshot(const model::ModelParams& params, int n_train,
                           const tsp::TspInstance& instance, int step);

/// C[i][j] = <e_i, e_j> / (|e_i| |e_j|); unit diagonal, exactly symmetric.
/// Throws ValidationError on a zero-norm row.
Matrix cosine_map(const Matrix& rows);

struct Pca {
  Matrix projection;  // rows x 2, centered
  double explained[2] = {0.0, 0.0};  // descending
  Matrix components;  // 2 x cols; first nonzero coordinate of each is positive
};

/// Mean-centers the rows and projects onto the top two covariance
/// eigenvectors. Needs >= 3 rows. Throws NumericalError if the
/// eigensolver fails.
Pca pca2d(const Matrix& rows);

void write_matrix_csv(std::ostream& out, const Matrix& m);

}  // namespace nco::analysis
