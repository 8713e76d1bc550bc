#pragma once

// Model checkpoint file.
//
//   offset  size  field
//   0       8     magic "NCOCKPT\0"
//   8       4     u32 format version (1)
//   12      4     u32 bytes per scalar (4 = float32, 8 = float64)
//   16      20    i32 depth, width, heads, qkv_dim, ffn_dim
//   36      1     u8 gated_attention
//   37      1     u8 rezero
//   38      2     reserved (0)
//   40      8     u64 scalar count
//   48      ...   parameters, little-endian, in ModelParams::for_each_block order
//
// All integers are little-endian.

#include <filesystem>
#include <iosfwd>

#include "nco/model.hpp"

namespace nco::model {

enum class Precision : std::uint32_t { kFloat32 = 4, kFloat64 = 8 };

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const ModelParams& params,
                      Precision precision = Precision::kFloat32);
ModelParams read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     Precision precision = Precision::kFloat32);
ModelParams load_checkpoint(const std::filesystem::path& path);

/// Rounds every parameter through float32, matching a float32 save/load.
ModelParams round_to_float32(const ModelParams& params);

}  // namespace nco::model
