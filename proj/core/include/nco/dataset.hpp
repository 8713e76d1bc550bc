#pragma once

// Binary dataset of TSP instances sharing one size n.
//
//   offset  size  field
//   0       4     magic "TSPD"
//   4       4     u32 format version (1)
//   8       1     u8 distribution
//   9       1     u8 label kind (0 = unlabeled)
//   10      2     reserved (0)
//   12      4     u32 n
//   16      8     u64 count
//   24      8     u64 base seed
//   32      ...   count * n * (f64 x, f64 y)
//   then, when labeled, count records of n * i32 tour + f64 cost
//
// Record i is at a fixed offset, so readers can seek.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "nco/instance.hpp"

namespace nco::tsp {

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::uint64_t kDatasetHeaderBytes = 32;

struct DatasetHeader {
  Distribution kind = Distribution::kUniform;
  LabelKind label = LabelKind::kNone;
  int n = 0;
  std::uint64_t count = 0;
  std::uint64_t seed = 0;
};

/// Seed of instance `index` in a dataset generated from `base_seed`.
std::uint64_t instance_seed(std::uint64_t base_seed, std::uint64_t index);

/// Generates `count` instances and labels them (held_karp or nn_two_opt).
/// Labeling runs on `threads` workers; the result is independent of it.
std::vector<TspInstance> generate_dataset(Distribution kind, int n, std::uint64_t count,
                                          std::uint64_t seed, LabelKind label, int threads);

/// Attaches a reference tour of the requested kind to each instance.
void label_instances(std::vector<TspInstance>& instances, LabelKind label, int threads);

/// All instances must have size header.n and, when header.label is set, a label.
void write_dataset(const std::filesystem::path& path, const DatasetHeader& header,
                   const std::vector<TspInstance>& instances);

class DatasetReader {
 public:
  explicit DatasetReader(const std::filesystem::path& path);

  const DatasetHeader& header() const { return header_; }
  std::uint64_t size() const { return header_.count; }
  int n() const { return header_.n; }
  bool labeled() const { return header_.label != LabelKind::kNone; }

  TspInstance read(std::uint64_t index);
  std::vector<TspInstance> read_range(std::uint64_t first, std::uint64_t count);
  std::vector<TspInstance> read_all() { return read_range(0, size()); }

 private:
  std::ifstream in_;
  DatasetHeader header_;
};

std::vector<TspInstance> load_dataset(const std::filesystem::path& path);

}  // namespace nco::tsp
