#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace nco::tsp {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

enum class Distribution : std::uint8_t { kUniform = 0, kExplosion = 1, kImplosion = 2, kCluster = 3 };

/// Where an instance's reference tour came from.
enum class LabelKind : std::uint8_t { kNone = 0, kHeldKarp = 1, kNnTwoOpt = 2, kTsplib = 3 };

std::string_view to_string(Distribution kind);
std::string_view to_string(LabelKind kind);
Distribution parse_distribution(std::string_view name);
LabelKind parse_label_kind(std::string_view name);

struct TspInstance {
  /// Model-facing coordinates in [0,1]^2.
  std::vector<Point> coords;
  std::optional<std::vector<int>> ref_tour;
  std::optional<double> ref_cost;
  LabelKind label = LabelKind::kNone;

  // Provenance.
  bool from_tsplib = false;
  Distribution kind = Distribution::kUniform;
  std::uint64_t seed = 0;
  std::string name;
  /// Original TSPLIB coordinates; costs against TSPLIB optima use these.
  std::vector<Point> raw_coords;

  int n() const { return static_cast<int>(coords.size()); }
  bool labeled() const { return ref_tour.has_value() && ref_cost.has_value(); }
};

struct Tour {
  std::vector<int> order;
  double cost = 0.0;
};

/// Deterministic instance for (kind, n, seed). Requires n >= 4.
///   uniform   i.i.d. U[0,1]^2
///   explosion uniform sample; points inside a disk (center U[0,1]^2,
///             radius U[0.1,0.3]) pushed to its boundary plus radial noise
///   implosion points inside such a disk contracted toward its center by
///             a factor U[0.1,0.5]
///   cluster   U{3..8} Gaussian clusters (sigma 0.05) with centers
///             U[0.2,0.8]^2
/// All coordinates are clipped to [0,1]^2.
TspInstance generate(Distribution kind, int n, std::uint64_t seed);

double distance(const Point& a, const Point& b);

/// Closed-cycle Euclidean length, bit-identical for every rotation and
/// reversal of the cycle. Throws ValidationError unless `order` is a
/// permutation of 0..n-1.
double tour_cost(std::span<const Point> coords, std::span<const int> order);
double tour_cost(const TspInstance& instance, std::span<const int> order);

bool is_permutation(std::span<const int> order, int n);

inline constexpr int kHeldKarpMaxNodes = 16;

/// Exact tour by bitmask dynamic programming, O(2^n n^2). n <= 16.
Tour held_karp(const TspInstance& instance);

/// Nearest-neighbor construction from `start`.
Tour nearest_neighbor(const TspInstance& instance, int start);

/// Runs first-improvement 2-opt until no improving exchange remains.
Tour two_opt(const TspInstance& instance, Tour tour);

/// Nearest neighbor from a seed-chosen start, then 2-opt to local optimality.
/// The returned order is rotated to begin at node 0.
Tour nn_two_opt(const TspInstance& instance, std::uint64_t seed);

/// 100 * (cost - ref_cost) / ref_cost. Throws if ref_cost <= 0.
double gap(double cost, double ref_cost);

/// Rotates a cyclic order so that it starts at node 0.
std::vector<int> rotate_to_zero(std::span<const int> order);

// --- TSPLIB -----------------------------------------------------------------

/// Parses the EUC_2D subset of TSPLIB. Coordinates are min-max normalized
/// into [0,1]^2 with a common scale for both axes; raw coordinates are kept.
TspInstance parse_tsplib(std::string_view text);

/// TSPLIB EUC_2D metric: each edge is rounded to the nearest integer.
std::int64_t tsplib_distance(const Point& a, const Point& b);
std::int64_t tsplib_tour_cost(const TspInstance& instance, std::span<const int> order);

}  // namespace nco::tsp
