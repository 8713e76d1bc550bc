#include "nco/analysis.hpp"

#include <algorithm>
#include <chrono>
#include <memory>
#include <cmath>
#include <numeric>
#include <ostream>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include "nco/error.hpp"
#include "nco/parallel.hpp"
#include "nco/scaling.hpp"

namespace nco::analysis {

using model::ConstructionState;
using tsp::TspInstance;

Evaluation evaluate(const model::ModelParams& params, int n_train, const std::vector<TspInstance>& instances,
                    const decode::DecodeSpec& spec, int threads, bool log_n_correction) {
  if (instances.empty()) throw ValidationError("evaluation needs at least one instance");
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (!instances[i].ref_cost || !(*instances[i].ref_cost > 0.0))
      throw ValidationError(fmt::format("instance {} has no reference cost; evaluation needs labels", i));
  }
  Evaluation eval;
  eval.decode = decode::to_string(spec);
  eval.rows.resize(instances.size());
  parallel_for(instances.size(), threads, [&](std::size_t i) {
    const TspInstance& inst = instances[i];
    const auto t0 = std::chrono::steady_clock::now();
    model::Predictor predictor(params, n_train, log_n_correction);
    InstanceResult r;
    r.index = i;
    r.tour = decode::run(predictor, inst, spec, i);
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.ref_cost = *inst.ref_cost;
    const double cost = inst.from_tsplib ? static_cast<double>(tsp::tsplib_tour_cost(inst, r.tour.order))
                                         : r.tour.cost;
    r.gap = tsp::gap(cost, r.ref_cost);
    eval.rows[i] = std::move(r);
  });
  double gap_sum = 0.0, flops_sum = 0.0;
  const auto params_n = model::param_count(params.config);
  for (std::size_t i = 0; i < eval.rows.size(); ++i) {
    gap_sum += eval.rows[i].gap;
    eval.total_wall_seconds += eval.rows[i].wall_seconds;
    if (spec.strategy != decode::Strategy::kReference)
      flops_sum += scaling::flops_per_solution(params_n, instances[i].n(), spec.beam_factor());
  }
  eval.mean_gap = gap_sum / static_cast<double>(eval.rows.size());
  eval.gflops_per_solution = flops_sum / static_cast<double>(eval.rows.size());
  return eval;
}

records::EvalRecord to_record(const Evaluation& eval, const model::ModelConfig& config,
                              const std::string& dataset, int n, double samples_seen) {
  records::EvalRecord r;
  r.config = config;
  r.params = model::param_count(config);
  r.decode = eval.decode;
  r.dataset = dataset;
  r.n = n;
  r.instances = static_cast<int>(eval.rows.size());
  r.mean_gap = eval.mean_gap;
  r.wall_seconds = eval.total_wall_seconds;
  r.gflops = eval.gflops_per_solution;
  r.samples = samples_seen;
  return r;
}

void write_tours_csv(std::ostream& out, const Evaluation& eval) {
  out << "instance,cost,ref_cost,gap,tour\n";
  for (const auto& r : eval.rows) {
    std::string tour;
    for (std::size_t k = 0; k < r.tour.order.size(); ++k) {
      if (k) tour += ' ';
      tour += std::to_string(r.tour.order[k]);
    }
    out << fmt::format("{},{:.17g},{:.17g},{:.17g},{}\n", r.index, r.tour.cost, r.ref_cost, r.gap, tour);
  }
}

void write_timing_csv(std::ostream& out, const Evaluation& eval) {
  out << "instance,wall_seconds\n";
  for (const auto& r : eval.rows) out << fmt::format("{},{:.6f}\n", r.index, r.wall_seconds);
}

// --- long-sightedness -------------------------------------------------------

int neighbor_rank(std::span<const tsp::Point> coords, const ConstructionState& state, int node) {
  if (state.visited.at(static_cast<std::size_t>(node))) throw ValidationError("rank of a visited node");
  const auto& cur = coords[static_cast<std::size_t>(state.current)];
  const double d = tsp::distance(cur, coords[static_cast<std::size_t>(node)]);
  int rank = 1;
  for (int other : state.available()) {
    if (other == node) continue;
    const double od = tsp::distance(cur, coords[static_cast<std::size_t>(other)]);
    if (od < d || (od == d && other < node)) ++rank;
  }
  return rank;
}

PolicyFactory model_policy(const model::ModelParams& params, int n_train) {
  return [&params, n_train]() -> Policy {
    auto predictor = std::make_shared<model::Predictor>(params, n_train);
    return [predictor](const TspInstance& inst, const ConstructionState& state, int) {
      const auto probs = predictor->probabilities(inst.coords, state);
      int best = -1;
      for (int i = 0; i < state.n(); ++i) {
        if (state.visited[static_cast<std::size_t>(i)]) continue;
        if (best < 0 || probs[static_cast<std::size_t>(i)] > probs[static_cast<std::size_t>(best)]) best = i;
      }
      return best;
    };
  };
}

PolicyFactory oracle_policy() {
  return [] { return Policy([](const TspInstance&, const ConstructionState&, int optimal) { return optimal; }); };
}

PolicyFactory nearest_policy() {
  return [] {
    return Policy([](const TspInstance& inst, const ConstructionState& state, int) {
      for (int node : state.available())
        if (neighbor_rank(inst.coords, state, node) == 1) return node;
      throw ValidationError("no available node");
    });
  };
}

std::int64_t LongSightReport::total_attempts() const {
  std::int64_t t = 0;
  for (const auto& b : buckets) t += b.attempts;
  return t;
}

double LongSightReport::mean_rate_above(int rank) const {
  double sum = 0.0;
  int count = 0;
  for (std::size_t i = static_cast<std::size_t>(std::max(rank, 0)); i < buckets.size(); ++i) {
    if (buckets[i].attempts == 0) continue;
    sum += buckets[i].rate();
    ++count;
  }
  return count == 0 ? 0.0 : sum / count;
}

LongSightReport long_sightedness(const std::vector<TspInstance>& instances, int k,
                                 const PolicyFactory& policy, int threads) {
  if (k < 1) throw ValidationError("long-sightedness needs K >= 1");
  for (const auto& inst : instances) {
    if (!inst.ref_tour) throw ValidationError("long-sightedness needs reference tours");
  }
  const std::size_t nb = static_cast<std::size_t>(k) + 1;
  std::vector<std::vector<RankBucket>> per(instances.size(), std::vector<RankBucket>(nb));
  parallel_for(instances.size(), threads, [&](std::size_t i) {
    const TspInstance& inst = instances[i];
    const auto& tour = *inst.ref_tour;
    const Policy choose = policy();
    auto state = ConstructionState::begin(inst.n(), tour[0]);
    for (int t = 1; t < inst.n(); ++t) {
      const int optimal = tour[static_cast<std::size_t>(t)];
      if (state.available_count() >= 2) {
        const int rank = neighbor_rank(inst.coords, state, optimal);
        auto& b = per[i][static_cast<std::size_t>(std::min(rank, k + 1) - 1)];
        ++b.attempts;
        if (choose(inst, state, optimal) == optimal) ++b.successes;
      }
      state.visit(optimal);
    }
  });
  LongSightReport report;
  report.k = k;
  report.buckets.assign(nb, {});
  for (const auto& p : per) {
    for (std::size_t b = 0; b < nb; ++b) {
      report.buckets[b].attempts += p[b].attempts;
      report.buckets[b].successes += p[b].successes;
    }
  }
  return report;
}

void write_longsight_csv(std::ostream& out, const LongSightReport& report) {
  out << "rank,attempts,successes,rate\n";
  for (std::size_t b = 0; b < report.buckets.size(); ++b) {
    const std::string label = b < static_cast<std::size_t>(report.k) ? std::to_string(b + 1)
                                                                      : fmt::format(">{}", report.k);
    const auto& bk = report.buckets[b];
    out << fmt::format("{},{},{},{:.17g}\n", label, bk.attempts, bk.successes, bk.rate());
  }
}

// --- embeddings -------------------------------------------------------------

EmbeddingSnapshot snapshot(const model::ModelParams& params, int n_train, const TspInstance& instance,
                           int step) {
  if (!instance.ref_tour) throw ValidationError("snapshots need a reference tour");
  const int n = instance.n();
  if (step < 1 || step > n - 1) throw ValidationError(fmt::format("snapshot step must be in [1, {}]", n - 1));
  const auto& tour = *instance.ref_tour;
  auto state = ConstructionState::begin(n, tour[0]);
  for (int t = 1; t < step; ++t) state.visit(tour[static_cast<std::size_t>(t)]);

  model::Predictor predictor(params, n_train);
  std::vector<int> row_nodes;
  const auto hidden = predictor.hidden(instance.coords, state, &row_nodes);
  const std::size_t w = static_cast<std::size_t>(params.config.width);

  EmbeddingSnapshot snap;
  snap.step = step;
  snap.context_nodes = {state.start, state.current};
  snap.context = {2, w, {}};
  snap.context.data.insert(snap.context.data.end(), hidden.begin(), hidden.begin() + static_cast<std::ptrdiff_t>(w));
  const std::size_t last = row_nodes.size() - 1;
  snap.context.data.insert(snap.context.data.end(), hidden.begin() + static_cast<std::ptrdiff_t>(last * w),
                           hidden.begin() + static_cast<std::ptrdiff_t>((last + 1) * w));

  std::vector<std::size_t> row_of(static_cast<std::size_t>(n), 0);
  for (std::size_t r = 1; r < last; ++r) row_of[static_cast<std::size_t>(row_nodes[r])] = r;
  snap.available = {0, w, {}};
  for (int t = step; t < n; ++t) {
    const int node = tour[static_cast<std::size_t>(t)];
    const std::size_t r = row_of[static_cast<std::size_t>(node)];
    snap.nodes.push_back(node);
    snap.is_next.push_back(t == step);
    snap.available.data.insert(snap.available.data.end(), hidden.begin() + static_cast<std::ptrdiff_t>(r * w),
                               hidden.begin() + static_cast<std::ptrdiff_t>((r + 1) * w));
    ++snap.available.rows;
  }
  return snap;
}

Matrix cosine_map(const Matrix& m) {
  std::vector<double> norms(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) s += m.at(i, c) * m.at(i, c);
    norms[i] = std::sqrt(s);
    if (norms[i] == 0.0) throw ValidationError(fmt::format("row {} has zero norm", i));
  }
  Matrix out{m.rows, m.rows, std::vector<double>(m.rows * m.rows, 0.0)};
  for (std::size_t i = 0; i < m.rows; ++i) {
    out.data[i * m.rows + i] = 1.0;
    for (std::size_t j = i + 1; j < m.rows; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < m.cols; ++c) dot += m.at(i, c) * m.at(j, c);
      const double v = std::clamp(dot / (norms[i] * norms[j]), -1.0, 1.0);
      out.data[i * m.rows + j] = v;
      out.data[j * m.rows + i] = v;
    }
  }
  return out;
}

Pca pca2d(const Matrix& m) {
  if (m.rows < 3) throw ValidationError("PCA needs at least 3 rows");
  if (m.cols < 2) throw ValidationError("PCA needs at least 2 columns");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(m.cols));
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m.at(r, c);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(m.rows - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericalError("PCA eigendecomposition did not converge");

  Pca out;
  out.components = {2, m.cols, std::vector<double>(2 * m.cols)};
  const Eigen::Index top = static_cast<Eigen::Index>(m.cols) - 1;
  for (int k = 0; k < 2; ++k) {
    Eigen::VectorXd v = solver.eigenvectors().col(top - k);
    const double vmax = v.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (std::abs(v(i)) > 1e-12 * vmax) {
        if (v(i) < 0.0) v = -v;
        break;
      }
    }
    out.explained[k] = std::max(0.0, solver.eigenvalues()(top - k));
    for (std::size_t c = 0; c < m.cols; ++c) out.components.data[static_cast<std::size_t>(k) * m.cols + c] = v(static_cast<Eigen::Index>(c));
  }
  out.projection = {m.rows, 2, std::vector<double>(m.rows * 2)};
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t k = 0; k < 2; ++k) {
      double s = 0.0;
      for (std::size_t c = 0; c < m.cols; ++c)
        s += x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) * out.components.data[k * m.cols + c];
      out.projection.data[r * 2 + k] = s;
    }
  }
  return out;
}

void write_matrix_csv(std::ostream& out, const Matrix& m) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      if (c) out << ',';
      out << fmt::format("{:.17g}", m.at(r, c));
    }
    out << '\n';
  }
}

}  // namespace nco::analysis
