#include "nco/dataset.hpp"

#include <cstring>

#include <fmt/format.h>

#include "nco/binary_io.hpp"
#include "nco/error.hpp"
#include "nco/parallel.hpp"
#include "nco/rng.hpp"

namespace nco::tsp {

namespace {

constexpr char kMagic[4] = {'T', 'S', 'P', 'D'};

std::uint64_t coord_bytes(int n) { return static_cast<std::uint64_t>(n) * 16; }
std::uint64_t label_bytes(int n) { return static_cast<std::uint64_t>(n) * 4 + 8; }

}  // namespace

std::uint64_t instance_seed(std::uint64_t base_seed, std::uint64_t index) {
  return derive_seed(base_seed, index);
}

void label_instances(std::vector<TspInstance>& instances, LabelKind label, int threads) {
  if (label == LabelKind::kNone) return;
  if (label == LabelKind::kTsplib) throw ValidationError("cannot generate TSPLIB labels");
  if (label == LabelKind::kHeldKarp) {
    for (const auto& inst : instances) {
      if (inst.n() > kHeldKarpMaxNodes)
        throw ValidationError(fmt::format("held-karp labels need n <= {}, got {}",
                                          kHeldKarpMaxNodes, inst.n()));
    }
  }
  parallel_for(instances.size(), threads, [&](std::size_t i) {
    TspInstance& inst = instances[i];
    const Tour tour = label == LabelKind::kHeldKarp ? held_karp(inst) : nn_two_opt(inst, inst.seed);
    inst.ref_tour = tour.order;
    inst.ref_cost = tour.cost;
    inst.label = label;
  });
}

std::vector<TspInstance> generate_dataset(Distribution kind, int n, std::uint64_t count,
                                          std::uint64_t seed, LabelKind label, int threads) {
  if (label == LabelKind::kHeldKarp && n > kHeldKarpMaxNodes)
    throw ValidationError(fmt::format("held-karp labels need n <= {}, got {}", kHeldKarpMaxNodes, n));
  std::vector<TspInstance> out(count);
  parallel_for(count, threads, [&](std::size_t i) { out[i] = generate(kind, n, instance_seed(seed, i)); });
  label_instances(out, label, threads);
  return out;
}

void write_dataset(const std::filesystem::path& path, const DatasetHeader& header,
                   const std::vector<TspInstance>& instances) {
  if (header.n < 1) throw ValidationError("dataset n must be positive");
  if (instances.size() != header.count)
    throw ValidationError(fmt::format("header count {} but {} instances", header.count, instances.size()));
  const bool labeled = header.label != LabelKind::kNone;
  for (const auto& inst : instances) {
    if (inst.n() != header.n) throw ValidationError("dataset instances must share one size n");
    if (labeled && !inst.labeled()) throw ValidationError("labeled dataset has an unlabeled instance");
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
  out.write(kMagic, 4);
  io::put_le<std::uint32_t>(out, kDatasetVersion);
  io::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(header.kind));
  io::put_le<std::uint8_t>(out, static_cast<std::uint8_t>(header.label));
  io::put_le<std::uint16_t>(out, 0);
  io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(header.n));
  io::put_le<std::uint64_t>(out, header.count);
  io::put_le<std::uint64_t>(out, header.seed);
  for (const auto& inst : instances) {
    for (const auto& p : inst.coords) {
      io::put_f64(out, p.x);
      io::put_f64(out, p.y);
    }
  }
  if (labeled) {
    for (const auto& inst : instances) {
      for (int v : *inst.ref_tour) io::put_i32(out, v);
      io::put_f64(out, *inst.ref_cost);
    }
  }
  if (!out) throw ValidationError("failed writing dataset '" + path.string() + "'");
}

DatasetReader::DatasetReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
  if (!in_) throw ValidationError("cannot open dataset '" + path.string() + "'");
  char magic[4];
  if (!in_.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw ValidationError("'" + path.string() + "' is not a dataset file (bad magic)");
  const auto version = io::get_le<std::uint32_t>(in_);
  if (version != kDatasetVersion)
    throw ValidationError(fmt::format("unsupported dataset version {}", version));
  const auto kind = io::get_le<std::uint8_t>(in_);
  const auto label = io::get_le<std::uint8_t>(in_);
  if (kind > 3 || label > 3) throw ValidationError("corrupt dataset header");
  header_.kind = static_cast<Distribution>(kind);
  header_.label = static_cast<LabelKind>(label);
  io::get_le<std::uint16_t>(in_);
  header_.n = static_cast<int>(io::get_le<std::uint32_t>(in_));
  header_.count = io::get_le<std::uint64_t>(in_);
  header_.seed = io::get_le<std::uint64_t>(in_);
  if (header_.n < 1) throw ValidationError("corrupt dataset header");

  std::uint64_t expected = kDatasetHeaderBytes + header_.count * coord_bytes(header_.n);
  if (labeled()) expected += header_.count * label_bytes(header_.n);
  const auto actual = std::filesystem::file_size(path);
  if (actual != expected)
    throw ValidationError(fmt::format("dataset '{}' has {} bytes, header implies {}", path.string(),
                                      actual, expected));
}

TspInstance DatasetReader::read(std::uint64_t index) {
  if (index >= header_.count)
    throw ValidationError(fmt::format("dataset index {} out of range ({})", index, header_.count));
  const int n = header_.n;
  TspInstance inst;
  inst.kind = header_.kind;
  inst.seed = instance_seed(header_.seed, index);
  inst.coords.resize(n);
  in_.clear();
  in_.seekg(static_cast<std::streamoff>(kDatasetHeaderBytes + index * coord_bytes(n)));
  for (auto& p : inst.coords) {
    p.x = io::get_f64(in_);
    p.y = io::get_f64(in_);
  }
  if (labeled()) {
    in_.seekg(static_cast<std::streamoff>(kDatasetHeaderBytes + header_.count * coord_bytes(n) +
                                          index * label_bytes(n)));
    std::vector<int> tour(n);
    for (int& v : tour) v = io::get_i32(in_);
    if (!is_permutation(tour, n))
      throw ValidationError(fmt::format("dataset record {} has an invalid tour", index));
    inst.ref_tour = std::move(tour);
    inst.ref_cost = io::get_f64(in_);
    inst.label = header_.label;
  }
  return inst;
}

std::vector<TspInstance> DatasetReader::read_range(std::uint64_t first, std::uint64_t count) {
  if (first + count > header_.count) throw ValidationError("dataset range out of bounds");
  std::vector<TspInstance> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) out.push_back(read(first + i));
  return out;
}

std::vector<TspInstance> load_dataset(const std::filesystem::path& path) {
  DatasetReader reader(path);
  return reader.read_all();
}

}  // namespace nco::tsp
