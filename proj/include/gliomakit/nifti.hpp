#pragma once

// NIfTI-1 single-file (.nii / .nii.gz) reader and writer.
//
// Only the fields the pipeline consumes are modelled. Gzip input is detected
// from the 0x1F 0x8B prefix rather than the file name; output is gzipped when
// the target path ends in ".gz". Files of either byte order are accepted,
// files are always written little-endian.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "gliomakit/volume.hpp"

namespace gliomakit::nifti {

inline constexpr std::int32_t kHeaderSize = 348;
inline constexpr float kDefaultVoxOffset = 352.0f;

enum class DataType : std::int16_t {
    UInt8 = 2,
    Int16 = 4,
    Int32 = 8,
    Float32 = 16,
    Float64 = 64,
};

/// Bits per voxel for a supported type code, 0 for anything else.
int bits_per_voxel(std::int16_t datatype);

struct Header {
    std::int32_t sizeof_hdr = kHeaderSize;
    std::array<std::int16_t, 8> dim{};
    std::int16_t datatype = 0;
    std::int16_t bitpix = 0;
    std::array<float, 8> pixdim{};
    float vox_offset = kDefaultVoxOffset;
    float scl_slope = 1.0f;
    float scl_inter = 0.0f;
    std::uint8_t xyzt_units = 0;
    std::int16_t qform_code = 0;
    std::int16_t sform_code = 0;
    std::array<std::array<float, 4>, 3> srow{};
    std::array<char, 4> magic{'n', '+', '1', '\0'};
};

struct DecodedHeader {
    Header header;
    bool byte_swapped = false;
};

/// Parses and validates the first 348 bytes. Throws NiftiError.
DecodedHeader decode_header(std::span<const std::uint8_t> bytes);

/// Little-endian 348-byte encoding of the modelled fields (all others zero).
std::vector<std::uint8_t> encode_header(const Header& header);

ScalarVolume read_scalar_volume(const std::filesystem::path& path);

/// Like read_scalar_volume, but every scaled value must be an integer in {0..3}.
LabelVolume read_label_volume(const std::filesystem::path& path);

/// uint8 voxels. Written to a sibling temp file, then renamed into place.
void write_label_volume(const LabelVolume& labels, const std::filesystem::path& path);

/// float32 voxels. Written to a sibling temp file, then renamed into place.
void write_scalar_volume(const ScalarVolume& volume, const std::filesystem::path& path);

/// Raw file bytes, gunzipped when the content starts with the gzip magic.
std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace gliomakit::nifti
