#include "gliomakit/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <system_error>

namespace gliomakit::nifti {

namespace {

// Field offsets in the NIfTI-1 header.
constexpr std::size_t kOffSizeofHdr = 0;
constexpr std::size_t kOffDim = 40;
constexpr std::size_t kOffDatatype = 70;
constexpr std::size_t kOffBitpix = 72;
constexpr std::size_t kOffPixdim = 76;
constexpr std::size_t kOffVoxOffset = 108;
constexpr std::size_t kOffSclSlope = 112;
constexpr std::size_t kOffSclInter = 116;
constexpr std::size_t kOffXyztUnits = 123;
constexpr std::size_t kOffQformCode = 252;
constexpr std::size_t kOffSformCode = 254;
constexpr std::size_t kOffSrow = 280;
constexpr std::size_t kOffMagic = 344;

template <typename T>
T load(std::span<const std::uint8_t> bytes, std::size_t offset, bool swap) {
    std::array<std::uint8_t, sizeof(T)> raw;
    std::memcpy(raw.data(), bytes.data() + offset, sizeof(T));
    if (swap) std::reverse(raw.begin(), raw.end());
    T value;
    std::memcpy(&value, raw.data(), sizeof(T));
    return value;
}

template <typename T>
void store_le(std::vector<std::uint8_t>& out, std::size_t offset, T value) {
    std::array<std::uint8_t, sizeof(T)> raw;
    std::memcpy(raw.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
    std::memcpy(out.data() + offset, raw.data(), sizeof(T));
}


std::vector<std::uint8_t> gunzip(std::span<const std::uint8_t> input, const std::filesystem::path& path) {
    z_stream zs{};
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw NiftiError("zlib init failed");
    std::vector<std::uint8_t> out;
    std::array<std::uint8_t, 1 << 16> chunk;
    zs.next_in = const_cast<Bytef*>(input.data());
    zs.avail_in = static_cast<uInt>(input.size());
    int rc = Z_OK;
    while (true) {
        zs.next_out = chunk.data();
        zs.avail_out = static_cast<uInt>(chunk.size());
        rc = inflate(&zs, Z_NO_FLUSH);
        out.insert(out.end(), chunk.data(), chunk.data() + (chunk.size() - zs.avail_out));
        if (rc == Z_STREAM_END) {
            // concatenated gzip members
            if (zs.avail_in == 0) break;
            inflateReset(&zs);
            continue;
        }
        if (rc != Z_OK) break;
        if (zs.avail_in == 0 && zs.avail_out != 0) break;
    }
    inflateEnd(&zs);
    if (rc != Z_STREAM_END) throw NiftiError(path.string() + ": corrupt or truncated gzip stream");
    return out;
}

std::vector<std::uint8_t> gzip(std::span<const std::uint8_t> input) {
    z_stream zs{};
    if (deflateInit2(&zs, 6, Z_DEFLATED, 16 + MAX_WBITS, 8, Z_DEFAULT_STRATEGY) != Z_OK)
        throw NiftiError("zlib init failed");
    std::vector<std::uint8_t> out(deflateBound(&zs, static_cast<uLong>(input.size())));
    zs.next_in = const_cast<Bytef*>(input.data());
    zs.avail_in = static_cast<uInt>(input.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = deflate(&zs, Z_FINISH);
    out.resize(zs.total_out);
    deflateEnd(&zs);
    if (rc != Z_STREAM_END) throw NiftiError("gzip compression failed");
    return out;
}

bool ends_with_gz(const std::filesystem::path& path) {
    const std::string s = path.string();
    return s.size() >= 3 && s.compare(s.size() - 3, 3, ".gz") == 0;
}

void write_atomically(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::filesystem::path tmp = path;
    tmp += ".partial";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw NiftiError("cannot write " + path.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            std::error_code ignored;
            std::filesystem::remove(tmp, ignored);
            throw NiftiError("write failed for " + path.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw NiftiError("cannot move output into place: " + path.string());
    }
}

struct RawImage {
    Header header;
    Grid grid;
    std::vector<double> values;  // scaled, gliomakit storage order
};

RawImage read_raw(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = read_file_bytes(path);
    const auto [hdr, swap] = decode_header(bytes);

    const std::size_t nx = static_cast<std::size_t>(hdr.dim[1]);
    const std::size_t ny = static_cast<std::size_t>(hdr.dim[2]);
    const std::size_t nz = static_cast<std::size_t>(hdr.dim[3]);
    const std::size_t n = nx * ny * nz;
    const std::size_t width = static_cast<std::size_t>(hdr.bitpix / 8);
    const double vox = hdr.vox_offset;
    if (!(vox >= kHeaderSize) || vox != std::floor(vox))
        throw NiftiError(path.string() + ": invalid vox_offset");
    const auto offset = static_cast<std::size_t>(vox);
    if (bytes.size() < offset || bytes.size() - offset < n * width)
        throw NiftiError(path.string() + ": truncated data section");

    double slope = hdr.scl_slope;
    double inter = hdr.scl_inter;
    if (slope == 0.0 || !std::isfinite(slope)) {
        slope = 1.0;
        inter = 0.0;
    }
    if (!std::isfinite(inter)) inter = 0.0;

    std::span<const std::uint8_t> data(bytes.data() + offset, n * width);
    auto raw_at = [&](std::size_t k) -> double {
        const std::size_t o = k * width;
        switch (static_cast<DataType>(hdr.datatype)) {
            case DataType::UInt8: return data[o];
            case DataType::Int16: return load<std::int16_t>(data, o, swap);
            case DataType::Int32: return load<std::int32_t>(data, o, swap);
            case DataType::Float32: return load<float>(data, o, swap);
            case DataType::Float64: return load<double>(data, o, swap);
        }
        return 0.0;
    };

    Grid grid;
    grid.dims = {nx, ny, nz};
    grid.spacing = {hdr.pixdim[1], hdr.pixdim[2], hdr.pixdim[3]};
    if (hdr.sform_code > 0) {
        for (std::size_t r = 0; r < 3; ++r)
            for (std::size_t c = 0; c < 4; ++c) grid.affine[r][c] = hdr.srow[r][c];
    } else {
        grid.affine = diagonal_affine(grid.spacing);
    }

    // File order has x fastest; ours has z fastest.
    std::vector<double> values(n);
    std::size_t k = 0;
    for (std::size_t z = 0; z < nz; ++z)
        for (std::size_t y = 0; y < ny; ++y)
            for (std::size_t x = 0; x < nx; ++x, ++k) {
                const double v = slope * raw_at(k) + inter;
                if (!std::isfinite(v)) throw NiftiError(path.string() + ": non-finite voxel value");
                values[grid.index(x, y, z)] = v;
            }
    return {hdr, grid, std::move(values)};
}

template <typename Emit>
std::vector<std::uint8_t> encode_image(const Grid& grid, DataType type, Emit&& emit_voxel) {
    for (std::size_t a = 0; a < 3; ++a) {
        if (grid.dims[a] > 32767) throw NiftiError("axis too long for NIfTI-1");
    }
    Header h;
    h.dim = {3,
             static_cast<std::int16_t>(grid.dims[0]),
             static_cast<std::int16_t>(grid.dims[1]),
             static_cast<std::int16_t>(grid.dims[2]),
             1, 1, 1, 1};
    h.datatype = static_cast<std::int16_t>(type);
    h.bitpix = static_cast<std::int16_t>(bits_per_voxel(h.datatype));
    h.pixdim = {1.0f,
                static_cast<float>(grid.spacing[0]),
                static_cast<float>(grid.spacing[1]),
                static_cast<float>(grid.spacing[2]),
                0.0f, 0.0f, 0.0f, 0.0f};
    h.xyzt_units = 2;  // mm
    h.sform_code = 1;
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 4; ++c) h.srow[r][c] = static_cast<float>(grid.affine[r][c]);

    std::vector<std::uint8_t> out = encode_header(h);
    out.resize(static_cast<std::size_t>(kDefaultVoxOffset), 0);  // empty extension block
    const std::size_t width = static_cast<std::size_t>(h.bitpix / 8);
    out.reserve(out.size() + grid.voxel_count() * width);
    for (std::size_t z = 0; z < grid.dims[2]; ++z)
        for (std::size_t y = 0; y < grid.dims[1]; ++y)
            for (std::size_t x = 0; x < grid.dims[0]; ++x) emit_voxel(out, grid.index(x, y, z));
    return out;
}

void write_image(const std::filesystem::path& path, std::vector<std::uint8_t> bytes) {
    if (ends_with_gz(path)) bytes = gzip(bytes);
    write_atomically(path, bytes);
}

}  // namespace

int bits_per_voxel(std::int16_t datatype) {
    switch (datatype) {
        case static_cast<std::int16_t>(DataType::UInt8): return 8;
        case static_cast<std::int16_t>(DataType::Int16): return 16;
        case static_cast<std::int16_t>(DataType::Int32): return 32;
        case static_cast<std::int16_t>(DataType::Float32): return 32;
        case static_cast<std::int16_t>(DataType::Float64): return 64;
        default: return 0;
    }
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NiftiError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() >= 2 && bytes[0] == 0x1F && bytes[1] == 0x8B) return gunzip(bytes, path);
    return bytes;
}

DecodedHeader decode_header(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < static_cast<std::size_t>(kHeaderSize)) throw NiftiError("file shorter than a NIfTI-1 header");

    bool swap = false;
    if (load<std::int32_t>(bytes, kOffSizeofHdr, false) != kHeaderSize) {
        if (load<std::int32_t>(bytes, kOffSizeofHdr, true) != kHeaderSize)
            throw NiftiError("sizeof_hdr is not 348 in either byte order");
        swap = true;
    }

    Header h;
    h.sizeof_hdr = kHeaderSize;
    for (std::size_t i = 0; i < 8; ++i) h.dim[i] = load<std::int16_t>(bytes, kOffDim + 2 * i, swap);
    h.datatype = load<std::int16_t>(bytes, kOffDatatype, swap);
    h.bitpix = load<std::int16_t>(bytes, kOffBitpix, swap);
    for (std::size_t i = 0; i < 8; ++i) h.pixdim[i] = load<float>(bytes, kOffPixdim + 4 * i, swap);
    h.vox_offset = load<float>(bytes, kOffVoxOffset, swap);
    h.scl_slope = load<float>(bytes, kOffSclSlope, swap);
    h.scl_inter = load<float>(bytes, kOffSclInter, swap);
    h.xyzt_units = bytes[kOffXyztUnits];
    h.qform_code = load<std::int16_t>(bytes, kOffQformCode, swap);
    h.sform_code = load<std::int16_t>(bytes, kOffSformCode, swap);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 4; ++c) h.srow[r][c] = load<float>(bytes, kOffSrow + 16 * r + 4 * c, swap);
    std::memcpy(h.magic.data(), bytes.data() + kOffMagic, 4);

    if (std::memcmp(h.magic.data(), "n+1\0", 4) != 0) throw NiftiError("bad magic (expected single-file \"n+1\")");
    if (h.dim[0] != 3 && h.dim[0] != 4) throw NiftiError("only 3-D volumes are supported (dim[0]=" + std::to_string(h.dim[0]) + ")");
    if (h.dim[0] == 4 && h.dim[4] != 1) throw NiftiError("4-D volume with more than one frame");
    for (std::size_t a = 1; a <= 3; ++a) {
        if (h.dim[a] < 1) throw NiftiError("non-positive dimension");
    }
    const int bits = bits_per_voxel(h.datatype);
    if (bits == 0) throw NiftiError("unsupported datatype code " + std::to_string(h.datatype));
    if (bits != h.bitpix) throw NiftiError("bitpix does not match datatype");
    for (std::size_t a = 1; a <= 3; ++a) {
        if (!(h.pixdim[a] > 0.0f) || !std::isfinite(h.pixdim[a])) throw NiftiError("non-positive pixdim");
    }
    return {h, swap};
}

std::vector<std::uint8_t> encode_header(const Header& h) {
    std::vector<std::uint8_t> out(kHeaderSize, 0);
    store_le<std::int32_t>(out, kOffSizeofHdr, h.sizeof_hdr);
    for (std::size_t i = 0; i < 8; ++i) store_le<std::int16_t>(out, kOffDim + 2 * i, h.dim[i]);
    store_le<std::int16_t>(out, kOffDatatype, h.datatype);
    store_le<std::int16_t>(out, kOffBitpix, h.bitpix);
    for (std::size_t i = 0; i < 8; ++i) store_le<float>(out, kOffPixdim + 4 * i, h.pixdim[i]);
    store_le<float>(out, kOffVoxOffset, h.vox_offset);
    store_le<float>(out, kOffSclSlope, h.scl_slope);
    store_le<float>(out, kOffSclInter, h.scl_inter);
    out[kOffXyztUnits] = h.xyzt_units;
    store_le<std::int16_t>(out, kOffQformCode, h.qform_code);
    store_le<std::int16_t>(out, kOffSformCode, h.sform_code);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 4; ++c) store_le<float>(out, kOffSrow + 16 * r + 4 * c, h.srow[r][c]);
    std::memcpy(out.data() + kOffMagic, h.magic.data(), 4);
    return out;
}

ScalarVolume read_scalar_volume(const std::filesystem::path& path) {
    RawImage img = read_raw(path);
    return ScalarVolume(std::move(img.grid), std::move(img.values));
}

LabelVolume read_label_volume(const std::filesystem::path& path) {
    RawImage img = read_raw(path);
    std::vector<std::uint8_t> labels(img.values.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const double v = img.values[i];
        if (v != std::round(v) || v < 0.0 || v > kMaxLabel)
            throw InvalidLabel(path.string() + ": voxel value " + std::to_string(v) + " is not a label in {0,1,2,3}");
        labels[i] = static_cast<std::uint8_t>(v);
    }
    return LabelVolume(std::move(img.grid), std::move(labels));
}

void write_label_volume(const LabelVolume& labels, const std::filesystem::path& path) {
    const auto data = labels.data();
    write_image(path, encode_image(labels.grid(), DataType::UInt8,
                                   [&](std::vector<std::uint8_t>& out, std::size_t i) { out.push_back(data[i]); }));
}

void write_scalar_volume(const ScalarVolume& volume, const std::filesystem::path& path) {
    const auto data = volume.data();
    write_image(path, encode_image(volume.grid(), DataType::Float32, [&](std::vector<std::uint8_t>& out, std::size_t i) {
                    const std::size_t at = out.size();
                    out.resize(at + 4);
                    store_le<float>(out, at, static_cast<float>(data[i]));
                }));
}

}  // namespace gliomakit::nifti
