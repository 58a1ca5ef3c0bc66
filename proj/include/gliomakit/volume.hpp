#pragma once

// Volumetric value types shared by every stage of the pipeline.
//
// Storage order: a voxel (x, y, z) lives at index (x * ny + y) * nz + z, i.e.
// the last axis varies fastest. Axis 0 is the NIfTI i axis, so dims and
// spacing line up with dim[1..3] / pixdim[1..3] of the source file.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gliomakit/error.hpp"

namespace gliomakit {

using Dims = std::array<std::size_t, 3>;
using Spacing = std::array<double, 3>;
/// Voxel-to-world transform, three rows of a 4x4 homogeneous matrix.
using Affine = std::array<std::array<double, 4>, 3>;

Affine diagonal_affine(const Spacing& spacing);

struct Grid {
    Dims dims{1, 1, 1};
    Spacing spacing{1.0, 1.0, 1.0};
    Affine affine = diagonal_affine({1.0, 1.0, 1.0});

    static Grid with_dims(Dims dims, Spacing spacing = {1.0, 1.0, 1.0});

    std::size_t voxel_count() const { return dims[0] * dims[1] * dims[2]; }

    std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
        return (x * dims[1] + y) * dims[2] + z;
    }

    std::array<std::size_t, 3> coords(std::size_t idx) const {
        const std::size_t z = idx % dims[2];
        const std::size_t rest = idx / dims[2];
        return {rest / dims[1], rest % dims[1], z};
    }

    bool on_border(std::size_t idx) const;

    /// Throws std::invalid_argument on zero dims or non-positive spacing.
    void validate() const;

    bool same_dims(const Grid& other) const { return dims == other.dims; }
    /// Spacing equal to a relative tolerance (float32 headers round-trip).
    bool same_spacing(const Grid& other, double rel_tol = 1e-6) const;
};

/// Throws DimensionMismatch unless both grids have equal dims (and spacing when asked).
void require_same_grid(const Grid& a, const Grid& b, std::string_view what, bool check_spacing = false);

class ScalarVolume {
public:
    ScalarVolume(Grid grid, std::vector<double> data);

    const Grid& grid() const { return grid_; }
    const Dims& dims() const { return grid_.dims; }
    const Spacing& spacing() const { return grid_.spacing; }
    std::span<const double> data() const { return data_; }
    double at(std::size_t x, std::size_t y, std::size_t z) const { return data_[grid_.index(x, y, z)]; }

private:
    Grid grid_;
    std::vector<double> data_;
};

enum class Label : std::uint8_t { Background = 0, NCR = 1, ED = 2, ET = 3 };

inline constexpr std::uint8_t kMaxLabel = 3;

class LabelVolume {
public:
    /// Throws InvalidLabel if any value exceeds 3.
    LabelVolume(Grid grid, std::vector<std::uint8_t> data);

    static LabelVolume zeros(const Grid& grid);

    const Grid& grid() const { return grid_; }
    const Dims& dims() const { return grid_.dims; }
    const Spacing& spacing() const { return grid_.spacing; }
    std::span<const std::uint8_t> data() const { return data_; }
    std::uint8_t at(std::size_t x, std::size_t y, std::size_t z) const { return data_[grid_.index(x, y, z)]; }

    bool operator==(const LabelVolume& other) const {
        return grid_.dims == other.grid_.dims && data_ == other.data_;
    }

private:
    Grid grid_;
    std::vector<std::uint8_t> data_;
};

enum class Region { ET, TC, WT };

inline constexpr std::array<Region, 3> kRegions{Region::ET, Region::TC, Region::WT};

std::string_view region_name(Region region);
/// Accepts "ET", "TC", "WT"; throws std::invalid_argument otherwise.
Region region_from_name(std::string_view name);

/// ET = {3}, TC = {1,3}, WT = {1,2,3}.
constexpr bool region_contains(Region region, std::uint8_t label) {
    switch (region) {
        case Region::ET: return label == 3;
        case Region::TC: return label == 1 || label == 3;
        case Region::WT: return label >= 1 && label <= 3;
    }
    return false;
}

class RegionMask {
public:
    /// Any nonzero byte is stored as 1.
    RegionMask(Region region, Grid grid, std::vector<std::uint8_t> data);

    Region region() const { return region_; }
    const Grid& grid() const { return grid_; }
    const Dims& dims() const { return grid_.dims; }
    const Spacing& spacing() const { return grid_.spacing; }
    std::span<const std::uint8_t> data() const { return data_; }
    bool at(std::size_t idx) const { return data_[idx] != 0; }
    bool at(std::size_t x, std::size_t y, std::size_t z) const { return data_[grid_.index(x, y, z)] != 0; }

    std::size_t count() const;
    bool empty() const { return count() == 0; }

    bool operator==(const RegionMask& other) const {
        return grid_.dims == other.grid_.dims && data_ == other.data_;
    }

private:
    Region region_;
    Grid grid_;
    std::vector<std::uint8_t> data_;
};

/// Directory-derived case name; non-empty and safe as a single path component.
class CaseId {
public:
    explicit CaseId(std::string id);

    const std::string& str() const { return id_; }

    auto operator<=>(const CaseId&) const = default;

private:
    std::string id_;
};

RegionMask extract_region(const LabelVolume& labels, Region region);

/// Rebuilds labels from per-region masks. Nesting is enforced by intersection
/// (et' = et & tc & wt, tc' = tc & wt) before assigning 3 / 1 / 2.
LabelVolume reconstruct_labels(const RegionMask& et, const RegionMask& tc, const RegionMask& wt);

}  // namespace gliomakit
