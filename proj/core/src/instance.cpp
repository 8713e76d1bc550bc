#include "nco/instance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "nco/error.hpp"
#include "nco/rng.hpp"

namespace nco::tsp {

std::string_view to_string(Distribution kind) {
  switch (kind) {
    case Distribution::kUniform: return "uniform";
    case Distribution::kExplosion: return "explosion";
    case Distribution::kImplosion: return "implosion";
    case Distribution::kCluster: return "cluster";
  }
  return "unknown";
}

std::string_view to_string(LabelKind kind) {
  switch (kind) {
    case LabelKind::kNone: return "none";
    case LabelKind::kHeldKarp: return "heldkarp";
    case LabelKind::kNnTwoOpt: return "nn2opt";
    case LabelKind::kTsplib: return "tsplib";
  }
  return "unknown";
}

Distribution parse_distribution(std::string_view name) {
  for (auto k : {Distribution::kUniform, Distribution::kExplosion, Distribution::kImplosion,
                 Distribution::kCluster})
    if (to_string(k) == name) return k;
  throw ValidationError(fmt::format("unknown distribution '{}'", name));
}

LabelKind parse_label_kind(std::string_view name) {
  for (auto k : {LabelKind::kNone, LabelKind::kHeldKarp, LabelKind::kNnTwoOpt, LabelKind::kTsplib})
    if (to_string(k) == name) return k;
  throw ValidationError(fmt::format("unknown label kind '{}'", name));
}

namespace {

double clip01(double v) { return std::clamp(v, 0.0, 1.0); }

struct Disk {
  Point center;
  double radius;
};

Disk random_disk(Rng& rng) {
  Disk d;
  d.center = {rng.uniform(), rng.uniform()};
  d.radius = rng.uniform(0.1, 0.3);
  return d;
}

}  // namespace

TspInstance generate(Distribution kind, int n, std::uint64_t seed) {
  if (n < 4) throw ValidationError(fmt::format("generate needs n >= 4, got {}", n));
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(kind), static_cast<std::uint64_t>(n)));
  TspInstance inst;
  inst.kind = kind;
  inst.seed = seed;
  inst.coords.resize(static_cast<std::size_t>(n));

  switch (kind) {
    case Distribution::kUniform:
      for (auto& p : inst.coords) p = {rng.uniform(), rng.uniform()};
      break;

    case Distribution::kExplosion: {
      for (auto& p : inst.coords) p = {rng.uniform(), rng.uniform()};
      const Disk disk = random_disk(rng);
      for (auto& p : inst.coords) {
        const double dx = p.x - disk.center.x, dy = p.y - disk.center.y;
        const double r = std::hypot(dx, dy);
        if (r >= disk.radius) continue;
        const double angle = r > 0.0 ? std::atan2(dy, dx) : rng.uniform(0.0, 2.0 * M_PI);
        const double pushed = disk.radius + rng.uniform(0.0, 0.02);
        p = {clip01(disk.center.x + pushed * std::cos(angle)),
             clip01(disk.center.y + pushed * std::sin(angle))};
      }
      break;
    }

    case Distribution::kImplosion: {
      for (auto& p : inst.coords) p = {rng.uniform(), rng.uniform()};
      const Disk disk = random_disk(rng);
      const double factor = rng.uniform(0.1, 0.5);
      for (auto& p : inst.coords) {
        const double dx = p.x - disk.center.x, dy = p.y - disk.center.y;
        if (std::hypot(dx, dy) >= disk.radius) continue;
        p = {clip01(disk.center.x + factor * dx), clip01(disk.center.y + factor * dy)};
      }
      break;
    }

    case Distribution::kCluster: {
      const int clusters = rng.uniform_int(3, 8);
      std::vector<Point> centers(static_cast<std::size_t>(clusters));
      for (auto& c : centers) c = {rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8)};
      for (auto& p : inst.coords) {
        const auto& c = centers[static_cast<std::size_t>(rng.uniform_int(0, clusters - 1))];
        const double x = rng.normal(c.x, 0.05);
        const double y = rng.normal(c.y, 0.05);
        p = {clip01(x), clip01(y)};
      }
      break;
    }
  }
  return inst;
}

double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

bool is_permutation(std::span<const int> order, int n) {
  if (static_cast<int>(order.size()) != n) return false;
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  for (int v : order) {
    if (v < 0 || v >= n || seen[static_cast<std::size_t>(v)]) return false;
    seen[static_cast<std::size_t>(v)] = 1;
  }
  return true;
}

double tour_cost(std::span<const Point> coords, std::span<const int> order) {
  const int n = static_cast<int>(coords.size());
  if (!is_permutation(order, n))
    throw ValidationError(fmt::format("tour is not a permutation of 0..{}", n - 1));
  if (n == 0) return 0.0;
  // Sum from node 0 toward its smaller neighbor so that every rotation and
  // reversal of one cycle gives the same bits.
  const std::size_t z = static_cast<std::size_t>(std::find(order.begin(), order.end(), 0) - order.begin());
  const std::size_t len = order.size();
  const bool forward = order[(z + 1) % len] <= order[(z + len - 1) % len];
  auto at = [&](std::size_t k) {
    return static_cast<std::size_t>(order[forward ? (z + k) % len : (z + len - k % len) % len]);
  };
  double cost = 0.0;
  for (std::size_t k = 0; k < len; ++k) cost += distance(coords[at(k)], coords[at(k + 1)]);
  return cost;
}

double tour_cost(const TspInstance& instance, std::span<const int> order) {
  return tour_cost(instance.coords, order);
}

Tour held_karp(const TspInstance& instance) {
  const int n = instance.n();
  if (n > kHeldKarpMaxNodes)
    throw ValidationError(
        fmt::format("held_karp supports n <= {}, got {}", kHeldKarpMaxNodes, n));
  if (n <= 3) {
    Tour t;
    t.order.resize(static_cast<std::size_t>(n));
    std::iota(t.order.begin(), t.order.end(), 0);
    t.cost = n == 0 ? 0.0 : tour_cost(instance, t.order);
    return t;
  }

  // Node 0 is the fixed start; subsets range over nodes 1..n-1 (bit j-1 = node j).
  const int m = n - 1;
  const std::size_t full = std::size_t{1} << m;
  std::vector<double> dist(static_cast<std::size_t>(n * n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      dist[static_cast<std::size_t>(i * n + j)] =
          distance(instance.coords[static_cast<std::size_t>(i)],
                   instance.coords[static_cast<std::size_t>(j)]);

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> dp(full * static_cast<std::size_t>(m), kInf);
  std::vector<std::int8_t> parent(full * static_cast<std::size_t>(m), -1);
  auto at = [m](std::size_t mask, int j) { return mask * static_cast<std::size_t>(m) + static_cast<std::size_t>(j); };

  for (int j = 0; j < m; ++j) dp[at(std::size_t{1} << j, j)] = dist[static_cast<std::size_t>(j + 1)];

  for (std::size_t mask = 1; mask < full; ++mask) {
    for (int j = 0; j < m; ++j) {
      if (!(mask & (std::size_t{1} << j))) continue;
      const double base = dp[at(mask, j)];
      if (base == kInf) continue;
      for (int k = 0; k < m; ++k) {
        if (mask & (std::size_t{1} << k)) continue;
        const std::size_t next = mask | (std::size_t{1} << k);
        const double cand = base + dist[static_cast<std::size_t>((j + 1) * n + (k + 1))];
        if (cand < dp[at(next, k)]) {
          dp[at(next, k)] = cand;
          parent[at(next, k)] = static_cast<std::int8_t>(j);
        }
      }
    }
  }

  const std::size_t all = full - 1;
  double best = kInf;
  int last = -1;
  for (int j = 0; j < m; ++j) {
    const double c = dp[at(all, j)] + dist[static_cast<std::size_t>((j + 1) * n)];
    if (c < best) {
      best = c;
      last = j;
    }
  }

  std::vector<int> rev;
  std::size_t mask = all;
  for (int j = last; j >= 0;) {
    rev.push_back(j + 1);
    const int p = parent[at(mask, j)];
    mask &= ~(std::size_t{1} << j);
    j = p;
  }
  Tour t;
  t.order.push_back(0);
  t.order.insert(t.order.end(), rev.rbegin(), rev.rend());
  t.cost = tour_cost(instance, t.order);
  return t;
}

Tour nearest_neighbor(const TspInstance& instance, int start) {
  const int n = instance.n();
  if (start < 0 || start >= n) throw ValidationError("nearest_neighbor: start out of range");
  std::vector<char> used(static_cast<std::size_t>(n), 0);
  Tour t;
  t.order.reserve(static_cast<std::size_t>(n));
  int cur = start;
  used[static_cast<std::size_t>(cur)] = 1;
  t.order.push_back(cur);
  for (int step = 1; step < n; ++step) {
    int best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      if (used[static_cast<std::size_t>(j)]) continue;
      const double d = distance(instance.coords[static_cast<std::size_t>(cur)],
                                instance.coords[static_cast<std::size_t>(j)]);
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    used[static_cast<std::size_t>(best)] = 1;
    t.order.push_back(best);
    cur = best;
  }
  t.cost = tour_cost(instance, t.order);
  return t;
}

Tour two_opt(const TspInstance& instance, Tour tour) {
  const int n = instance.n();
  auto& o = tour.order;
  auto d = [&](int a, int b) {
    return distance(instance.coords[static_cast<std::size_t>(a)],
                    instance.coords[static_cast<std::size_t>(b)]);
  };
  constexpr double kEps = 1e-12;
  bool improved = n >= 4;
  while (improved) {
    improved = false;
    for (int i = 0; i < n - 1; ++i) {
      for (int j = i + 2; j < n; ++j) {
        if (i == 0 && j == n - 1) continue;  // same pair of edges
        const int a = o[static_cast<std::size_t>(i)], b = o[static_cast<std::size_t>(i + 1)];
        const int c = o[static_cast<std::size_t>(j)], e = o[static_cast<std::size_t>((j + 1) % n)];
        const double delta = d(a, c) + d(b, e) - d(a, b) - d(c, e);
        if (delta < -kEps) {
          std::reverse(o.begin() + i + 1, o.begin() + j + 1);
          improved = true;
        }
      }
    }
  }
  tour.cost = tour_cost(instance, o);
  return tour;
}

std::vector<int> rotate_to_zero(std::span<const int> order) {
  std::vector<int> out(order.begin(), order.end());
  auto it = std::find(out.begin(), out.end(), 0);
  if (it != out.end()) std::rotate(out.begin(), it, out.end());
  return out;
}

Tour nn_two_opt(const TspInstance& instance, std::uint64_t seed) {
  const int n = instance.n();
  if (n < 1) throw ValidationError("nn_two_opt on an empty instance");
  Rng rng(derive_seed(seed, 0x2097ULL));
  const int start = rng.uniform_int(0, n - 1);
  Tour t = two_opt(instance, nearest_neighbor(instance, start));
  t.order = rotate_to_zero(t.order);
  t.cost = tour_cost(instance, t.order);
  return t;
}

double gap(double cost, double ref_cost) {
  if (!(ref_cost > 0.0))
    throw ValidationError(fmt::format("gap needs a positive reference cost, got {}", ref_cost));
  return 100.0 * (cost - ref_cost) / ref_cost;
}

}  // namespace nco::tsp
