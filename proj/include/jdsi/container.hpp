#pragma once

#include "jdsi/mri_model.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace jdsi::io {

enum class RecordKind : std::uint8_t
{
  kspace = 1,
  image = 2,
  maps = 3,
  mask = 4,
  param = 5,
  adam_state = 6
};

enum class DType : std::uint8_t
{
  c64 = 1,
  c128 = 2,
  f32 = 3,
  f64 = 4,
  u8 = 5
};

std::size_t dtype_size(DType t);

/// One named array. dims are (N, C or J, H, W); payload is row-major.
struct Record
{
  RecordKind kind = RecordKind::image;
  std::string name;
  std::array<std::uint32_t, 4> dims{1, 1, 1, 1};
  DType dtype = DType::f64;
  std::vector<std::uint8_t> payload;

  std::size_t elements() const;
  bool operator==(Record const &) const = default;
};

inline constexpr char magic[4] = {'J', 'K', 'S', '1'};
inline constexpr std::uint16_t format_version = 1;

void write(std::string const &path, std::vector<Record> const &records);
std::vector<Record> read(std::string const &path);
std::vector<std::uint8_t> encode(std::vector<Record> const &records);
std::vector<Record> decode(std::vector<std::uint8_t> const &bytes);

Record const &find(std::vector<Record> const &records, std::string const &name);

Record to_record(ComplexImage const &x, std::string const &name);
Record to_record(CoilStack const &k, std::string const &name, RecordKind kind = RecordKind::kspace);
Record to_record(SenseMaps const &m, std::string const &name);
/// The mask record name carries its descriptor as a query suffix,
/// e.g. "mask?acs=lines&count=24&af=4&seed=7".
Record to_record(SamplingMask const &m, std::string const &name);
Record to_record(std::vector<float> const &v, std::array<std::uint32_t, 4> dims, std::string const &name, RecordKind kind);
Record to_record(std::vector<double> const &v, std::array<std::uint32_t, 4> dims, std::string const &name, RecordKind kind);

ComplexImage to_image(Record const &r);
CoilStack to_stack(Record const &r);
/// Foreground is recovered as the pixels where any coil is non-zero.
SenseMaps to_maps(Record const &r);
SamplingMask to_mask(Record const &r);
std::vector<double> to_reals(Record const &r);

/// Record name without the descriptor suffix.
std::string base_name(std::string const &name);

} // namespace jdsi::io
