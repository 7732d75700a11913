// file_io.hpp - "FRG1" volume files and network checkpoints.
//
// Volume file layout (all little-endian):
//   0   4   magic "FRG1"
//   4   1   kind: 0 scalar volume, 1 vector field, 2 label mask
//   5  12   dims, 3 x uint32
//  17  24   spacing, 3 x float64
//  41  24   origin, 3 x float64
//  65  ..   payload, x fastest: float32 per scalar, 3 x float32 per vector
//           (x, y, z interleaved), uint16 per label
//
// Checkpoint layout (little-endian):
//   0   4   magic "FRP1"
//   4   4   hidden_width, uint32
//   8   1   activation: 0 sine, 1 tanh
//   9   8   sine_frequency, float64
//  17   8   seed, uint64
//  25   8   parameter count, uint64
//  33  ..   parameters, float64, in MLPParams storage order

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <variant>

#include "inrreg/velocity_net.hpp"
#include "inrreg/volume.hpp"

namespace inrreg {

enum class VolumeKind : std::uint8_t { scalar = 0, vector = 1, label = 2 };

inline constexpr std::size_t kVolumeHeaderBytes = 65;

struct VolumeFileHeader {
    VolumeKind kind = VolumeKind::scalar;
    GridSpec grid;
};

// Malformed file contents. what() starts with a stable tag: "bad magic",
// "unknown kind", "truncated header", "truncated payload" or
// "payload length mismatch".
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Filesystem failures; what() names the path and the cause.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using AnyVolume = std::variant<Volume3, VectorField3, LabelMask>;

void write_volume(const std::filesystem::path &path, const Volume3 &vol);
void write_volume(const std::filesystem::path &path, const VectorField3 &field);
void write_volume(const std::filesystem::path &path, const LabelMask &mask);

VolumeFileHeader read_volume_header(const std::filesystem::path &path);
AnyVolume read_volume(const std::filesystem::path &path);

// Typed readers; throw FormatError if the file holds another kind.
Volume3 read_scalar_volume(const std::filesystem::path &path);
VectorField3 read_vector_field(const std::filesystem::path &path);
LabelMask read_label_mask(const std::filesystem::path &path);

void write_params(const std::filesystem::path &path, const MLPParams &params);
MLPParams read_params(const std::filesystem::path &path);

// Hex SHA-256 of a file's bytes.
std::string file_sha256(const std::filesystem::path &path);

} // namespace inrreg
