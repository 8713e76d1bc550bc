#include "nco/checkpoint.hpp"

#include <fstream>

#include <fmt/format.h>

#include "nco/binary_io.hpp"
#include "nco/error.hpp"

namespace nco::model {

namespace {
constexpr char kMagic[9] = "NCOCKPT";
}

void write_checkpoint(std::ostream& out, const ModelParams& params, Precision precision) {
  const ModelConfig& c = params.config;
  io::put_magic(out, kMagic);
  io::put_le<std::uint32_t>(out, kCheckpointVersion);
  io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(precision));
  for (int v : {c.depth, c.width, c.heads, c.qkv_dim, c.ffn_dim}) io::put_i32(out, v);
  io::put_le<std::uint8_t>(out, c.gated_attention ? 1 : 0);
  io::put_le<std::uint8_t>(out, c.rezero ? 1 : 0);
  io::put_le<std::uint16_t>(out, 0);
  io::put_le<std::uint64_t>(out, params.scalar_count());
  params.for_each_block([&](std::span<const double> block, ParamRole) {
    for (double v : block) {
      if (precision == Precision::kFloat32) {
        io::put_f32(out, static_cast<float>(v));
      } else {
        io::put_f64(out, v);
      }
    }
  });
  if (!out) throw ValidationError("failed writing checkpoint");
}

ModelParams read_checkpoint(std::istream& in) {
  io::expect_magic(in, kMagic, "checkpoint");
  const auto version = io::get_le<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw ValidationError(fmt::format("unsupported checkpoint version {}", version));
  const auto width_bytes = io::get_le<std::uint32_t>(in);
  if (width_bytes != 4 && width_bytes != 8)
    throw ValidationError(fmt::format("bad checkpoint scalar width {}", width_bytes));
  ModelConfig c;
  c.depth = io::get_i32(in);
  c.width = io::get_i32(in);
  c.heads = io::get_i32(in);
  c.qkv_dim = io::get_i32(in);
  c.ffn_dim = io::get_i32(in);
  c.gated_attention = io::get_le<std::uint8_t>(in) != 0;
  c.rezero = io::get_le<std::uint8_t>(in) != 0;
  io::get_le<std::uint16_t>(in);
  const auto count = io::get_le<std::uint64_t>(in);

  ModelParams params = ModelParams::zeros(c);
  if (count != params.scalar_count())
    throw ValidationError(fmt::format("checkpoint holds {} scalars, config implies {}", count,
                                      params.scalar_count()));
  params.for_each_block([&](std::span<double> block, ParamRole) {
    for (double& v : block) v = width_bytes == 4 ? static_cast<double>(io::get_f32(in)) : io::get_f64(in);
  });
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     Precision precision) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
  write_checkpoint(out, params, precision);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint '" + path.string() + "'");
  return read_checkpoint(in);
}

ModelParams round_to_float32(const ModelParams& params) {
  ModelParams out = params;
  out.for_each_block([](std::span<double> block, ParamRole) {
    for (double& v : block) v = static_cast<double>(static_cast<float>(v));
  });
  return out;
}

}  // namespace nco::model
