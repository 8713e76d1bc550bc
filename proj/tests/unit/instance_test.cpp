#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <gtest/gtest.h>

#include "nco/checkpoint.hpp"
#include "nco/dataset.hpp"
#include "nco/error.hpp"
#include "nco/instance.hpp"
#include "support/oracles.hpp"

namespace tsp = nco::tsp;
using nco::testing::brute_force_cost;
using nco::testing::from_points;

namespace {

tsp::TspInstance square() { return from_points({{0, 0}, {0, 1}, {1, 1}, {1, 0}}); }

std::filesystem::path temp_path(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "nco_unit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

double coord_variance(const tsp::TspInstance& inst) {
  double mx = 0, my = 0;
  for (const auto& p : inst.coords) mx += p.x, my += p.y;
  mx /= inst.n();
  my /= inst.n();
  double v = 0;
  for (const auto& p : inst.coords) v += (p.x - mx) * (p.x - mx) + (p.y - my) * (p.y - my);
  return v / (inst.n() - 1);
}

}  // namespace

TEST(TourCost, SquareRotationAndReversal) {
  const auto sq = square();
  EXPECT_DOUBLE_EQ(tsp::tour_cost(sq, std::vector<int>{0, 1, 2, 3}), 4.0);
  const auto inst = tsp::generate(tsp::Distribution::kUniform, 12, 9);
  std::vector<int> order(12);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), std::mt19937(1));
  const double base = tsp::tour_cost(inst, order);
  for (int r = 0; r < 12; ++r) {
    auto rot = order;
    std::rotate(rot.begin(), rot.begin() + r, rot.end());
    EXPECT_EQ(tsp::tour_cost(inst, rot), base);
    std::reverse(rot.begin(), rot.end());
    EXPECT_EQ(tsp::tour_cost(inst, rot), base);
  }
}

TEST(TourCost, RejectsNonPermutations) {
  const auto sq = square();
  EXPECT_THROW(tsp::tour_cost(sq, std::vector<int>{0, 1, 1, 3}), nco::ValidationError);
  EXPECT_THROW(tsp::tour_cost(sq, std::vector<int>{0, 1, 2}), nco::ValidationError);
  EXPECT_THROW(tsp::tour_cost(sq, std::vector<int>{0, 1, 2, 4}), nco::ValidationError);
  EXPECT_FALSE(tsp::is_permutation(std::vector<int>{-1, 0, 1}, 3));
}

TEST(HeldKarp, SquareAndCollinear) {
  EXPECT_DOUBLE_EQ(tsp::held_karp(square()).cost, 4.0);
  const auto line = from_points({{0.1, 0.5}, {0.9, 0.5}, {0.3, 0.5}, {0.5, 0.5}, {0.7, 0.5}, {0.2, 0.5}});
  EXPECT_NEAR(tsp::held_karp(line).cost, 2 * 0.8, 1e-12);
}

TEST(HeldKarp, MatchesBruteForce) {
  for (int n = 5; n <= 9; ++n) {
    for (int i = 0; i < 50; ++i) {
      const auto inst = tsp::generate(tsp::Distribution::kUniform, n, 1000 * n + i);
      const auto t = tsp::held_karp(inst);
      ASSERT_TRUE(tsp::is_permutation(t.order, n));
      EXPECT_NEAR(t.cost, tsp::tour_cost(inst, t.order), 1e-12);
      EXPECT_NEAR(t.cost, brute_force_cost(inst), 1e-9) << "n=" << n << " i=" << i;
    }
  }
}

TEST(HeldKarp, RejectsTooLarge) {
  EXPECT_THROW(tsp::held_karp(tsp::generate(tsp::Distribution::kUniform, 17, 1)), nco::ValidationError);
}

TEST(Heuristics, NearestNeighborAndTwoOpt) {
  EXPECT_DOUBLE_EQ(tsp::nn_two_opt(square(), 3).cost, 4.0);
  for (int i = 0; i < 30; ++i) {
    const auto inst = tsp::generate(tsp::Distribution::kUniform, 4 + i % 10, 50 + i);
    const auto nn = tsp::nearest_neighbor(inst, 0);
    const auto improved = tsp::two_opt(inst, nn);
    EXPECT_LE(improved.cost, nn.cost + 1e-12);
    EXPECT_GE(improved.cost, tsp::held_karp(inst).cost - 1e-9);
    const auto h = tsp::nn_two_opt(inst, 7);
    EXPECT_EQ(h.order.front(), 0);
    EXPECT_NEAR(h.cost, tsp::tour_cost(inst, h.order), 1e-12);
    // 2-opt local optimality: no improving exchange remains
    const int n = inst.n();
    for (int a = 0; a < n; ++a)
      for (int b = a + 2; b < n; ++b) {
        if (a == 0 && b == n - 1) continue;
        const auto& o = improved.order;
        const auto& c = inst.coords;
        auto d = [&](int u, int v) {
          return tsp::distance(c[static_cast<std::size_t>(o[u])], c[static_cast<std::size_t>(o[v])]);
        };
        EXPECT_LE(d(a, a + 1) + d(b, (b + 1) % n), d(a, b) + d(a + 1, (b + 1) % n) + 1e-9);
      }
  }
}

TEST(Gap, Arithmetic) {
  EXPECT_EQ(tsp::gap(4.0, 4.0), 0.0);
  EXPECT_NEAR(tsp::gap(4.2, 4.0), 5.0, 1e-12);
  EXPECT_THROW(tsp::gap(1.0, 0.0), nco::ValidationError);
  EXPECT_THROW(tsp::gap(1.0, -2.0), nco::ValidationError);
  const auto inst = tsp::generate(tsp::Distribution::kUniform, 9, 4);
  const double c = tsp::held_karp(inst).cost;
  EXPECT_EQ(tsp::gap(c, c), 0.0);
}

TEST(Generate, DeterministicAndClipped) {
  for (auto kind : {tsp::Distribution::kUniform, tsp::Distribution::kExplosion, tsp::Distribution::kImplosion,
                    tsp::Distribution::kCluster}) {
    const auto a = tsp::generate(kind, 100, 7);
    EXPECT_EQ(a.coords, tsp::generate(kind, 100, 7).coords);
    EXPECT_NE(a.coords, tsp::generate(kind, 100, 8).coords);
    EXPECT_EQ(a.kind, kind);
    for (int s = 0; s < 20; ++s)
      for (const auto& p : tsp::generate(kind, 200, s).coords) {
        ASSERT_GE(p.x, 0.0);
        ASSERT_LE(p.x, 1.0);
        ASSERT_GE(p.y, 0.0);
        ASSERT_LE(p.y, 1.0);
      }
  }
  EXPECT_THROW(tsp::generate(tsp::Distribution::kUniform, 3, 1), nco::ValidationError);
}

TEST(Generate, ClusterVarianceBelowUniform) {
  double cluster = 0, uniform = 0;
  for (int s = 0; s < 20; ++s) {
    cluster += coord_variance(tsp::generate(tsp::Distribution::kCluster, 1000, s));
    uniform += coord_variance(tsp::generate(tsp::Distribution::kUniform, 1000, s));
  }
  EXPECT_LT(cluster, uniform);
}

TEST(Generate, NamesRoundTrip) {
  for (auto kind : {tsp::Distribution::kUniform, tsp::Distribution::kExplosion, tsp::Distribution::kImplosion,
                    tsp::Distribution::kCluster})
    EXPECT_EQ(tsp::parse_distribution(tsp::to_string(kind)), kind);
  EXPECT_THROW(tsp::parse_distribution("gaussian"), nco::ValidationError);
  for (auto k : {tsp::LabelKind::kNone, tsp::LabelKind::kHeldKarp, tsp::LabelKind::kNnTwoOpt, tsp::LabelKind::kTsplib})
    EXPECT_EQ(tsp::parse_label_kind(tsp::to_string(k)), k);
}

TEST(RotateToZero, StartsAtZeroPreservingCycle) {
  EXPECT_EQ(tsp::rotate_to_zero(std::vector<int>{2, 3, 0, 1}), (std::vector<int>{0, 1, 2, 3}));
}

TEST(Tsplib, ParsesMinimalFile) {
  const auto inst = tsp::parse_tsplib(
      "NAME : tiny4\nCOMMENT : handmade\nTYPE : TSP\nDIMENSION : 4\nEDGE_WEIGHT_TYPE : EUC_2D\n"
      "NODE_COORD_SECTION\n1 0 0\n2 3 4\n3 3 0\n4 0 2\nEOF\n");
  EXPECT_EQ(inst.n(), 4);
  EXPECT_EQ(inst.name, "tiny4");
  EXPECT_TRUE(inst.from_tsplib);
  EXPECT_EQ(inst.raw_coords[1], (tsp::Point{3, 4}));
  // common scale: range 4 on both axes
  EXPECT_EQ(inst.coords[1], (tsp::Point{0.75, 1.0}));
  EXPECT_EQ(inst.coords[3], (tsp::Point{0.0, 0.5}));
  EXPECT_EQ(tsp::tsplib_distance({0, 0}, {3, 4}), 5);
  EXPECT_EQ(tsp::tsplib_distance({0, 0}, {1, 1}), 1);
  EXPECT_EQ(tsp::tsplib_tour_cost(inst, std::vector<int>{0, 2, 1, 3}), 3 + 4 + 4 + 2);
}

TEST(Tsplib, RejectsBadInput) {
  const std::string head = "NAME : x\nTYPE : TSP\n";
  EXPECT_THROW(tsp::parse_tsplib(head + "DIMENSION : 3\nEDGE_WEIGHT_TYPE : EUC_2D\nNODE_COORD_SECTION\n1 0 0\n2 1 1\nEOF\n"),
               nco::ValidationError);
  EXPECT_THROW(tsp::parse_tsplib(head + "DIMENSION : 2\nEDGE_WEIGHT_TYPE : GEO\nNODE_COORD_SECTION\n1 0 0\n2 1 1\nEOF\n"),
               nco::ValidationError);
  EXPECT_THROW(tsp::parse_tsplib(head + "DIMENSION 2\nEDGE_WEIGHT_TYPE : EUC_2D\nNODE_COORD_SECTION\n1 0 0\n2 1 1\n"),
               nco::ValidationError);
  EXPECT_THROW(tsp::parse_tsplib("NAME : x\nEDGE_WEIGHT_TYPE : EUC_2D\nNODE_COORD_SECTION\n1 0 0\n"),
               nco::ValidationError);
}

TEST(Dataset, RoundTripAndSeek) {
  const auto insts = tsp::generate_dataset(tsp::Distribution::kExplosion, 8, 25, 99, tsp::LabelKind::kHeldKarp, 3);
  ASSERT_EQ(insts.size(), 25u);
  for (std::size_t i = 0; i < insts.size(); ++i) {
    EXPECT_EQ(insts[i].seed, tsp::instance_seed(99, i));
    ASSERT_TRUE(insts[i].labeled());
    EXPECT_NEAR(*insts[i].ref_cost, tsp::tour_cost(insts[i], *insts[i].ref_tour), 1e-9);
  }
  const auto path = temp_path("rt.tspd");
  tsp::write_dataset(path, {tsp::Distribution::kExplosion, tsp::LabelKind::kHeldKarp, 8, 25, 99}, insts);
  EXPECT_EQ(std::filesystem::file_size(path), 32u + 25u * 8u * 16u + 25u * (8u * 4u + 8u));

  tsp::DatasetReader reader(path);
  EXPECT_EQ(reader.size(), 25u);
  EXPECT_EQ(reader.n(), 8);
  EXPECT_TRUE(reader.labeled());
  const auto r17 = reader.read(17);
  EXPECT_EQ(r17.coords, insts[17].coords);
  EXPECT_EQ(*r17.ref_tour, *insts[17].ref_tour);
  EXPECT_EQ(*r17.ref_cost, *insts[17].ref_cost);
  EXPECT_EQ(reader.read(3).coords, insts[3].coords);
  const auto all = tsp::load_dataset(path);
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i].coords, insts[i].coords);
  EXPECT_THROW(reader.read(25), nco::ValidationError);
}

TEST(Dataset, ByteIdenticalAcrossThreadCounts) {
  const auto a = temp_path("a.tspd"), b = temp_path("b.tspd");
  const tsp::DatasetHeader h{tsp::Distribution::kCluster, tsp::LabelKind::kNnTwoOpt, 20, 12, 5};
  tsp::write_dataset(a, h, tsp::generate_dataset(h.kind, h.n, h.count, h.seed, h.label, 1));
  tsp::write_dataset(b, h, tsp::generate_dataset(h.kind, h.n, h.count, h.seed, h.label, 4));
  EXPECT_EQ(file_bytes(a), file_bytes(b));
}

TEST(Dataset, RejectsCorruptFiles) {
  const auto path = temp_path("bad.tspd");
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE and some more bytes to fill the header.....";
  }
  EXPECT_THROW(tsp::DatasetReader{path}, nco::ValidationError);
  const auto good = temp_path("trunc.tspd");
  tsp::write_dataset(good, {tsp::Distribution::kUniform, tsp::LabelKind::kNone, 6, 4, 1},
                     tsp::generate_dataset(tsp::Distribution::kUniform, 6, 4, 1, tsp::LabelKind::kNone, 1));
  std::filesystem::resize_file(good, std::filesystem::file_size(good) - 5);
  EXPECT_THROW(tsp::DatasetReader{good}, nco::ValidationError);
  EXPECT_THROW(tsp::generate_dataset(tsp::Distribution::kUniform, 17, 1, 1, tsp::LabelKind::kHeldKarp, 1),
               nco::ValidationError);
  EXPECT_THROW(tsp::DatasetReader{temp_path("missing.tspd")}, nco::ValidationError);
}

TEST(Checkpoint, RoundTripBothPrecisions) {
  const auto p = nco::testing::random_params(nco::testing::tiny_config(true, false), 3);
  const auto path = temp_path("m.bin");
  nco::model::save_checkpoint(path, p, nco::model::Precision::kFloat64);
  const auto q = nco::model::load_checkpoint(path);
  EXPECT_EQ(q.config, p.config);
  EXPECT_EQ(q.flatten(), p.flatten());

  nco::model::save_checkpoint(path, p);
  EXPECT_EQ(std::filesystem::file_size(path), 48u + 4u * p.scalar_count());
  EXPECT_EQ(nco::model::load_checkpoint(path).flatten(), nco::model::round_to_float32(p).flatten());

  std::filesystem::resize_file(path, 47);
  EXPECT_THROW(nco::model::load_checkpoint(path), nco::ValidationError);
}
