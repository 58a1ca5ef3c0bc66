#pragma once

// Label-map clean-up after fusion: drop small enhancing-tumour islands, then
// make sure the tumour core has no enclosed background cavities.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gliomakit/volume.hpp"

namespace gliomakit {

enum class Connectivity { Six = 6, Eighteen = 18, TwentySix = 26 };

/// Throws std::invalid_argument for anything but 6, 18 or 26.
Connectivity connectivity_from_int(int n);

/// Neighbour offsets (dx, dy, dz) for the adjacency, excluding the origin.
std::vector<std::array<int, 3>> neighbor_offsets(Connectivity connectivity);

struct ComponentLabeling {
    Grid grid;
    Connectivity connectivity = Connectivity::TwentySix;
    /// 0 for background, otherwise 1..num_components().
    std::vector<std::uint32_t> ids;
    /// sizes[id - 1] is the voxel count of component id.
    std::vector<std::size_t> sizes;

    std::size_t num_components() const { return sizes.size(); }
};

/// Ids follow the storage-order position of each component's first voxel.
ComponentLabeling connected_components(const RegionMask& mask, Connectivity connectivity);
ComponentLabeling connected_components(const Grid& grid, std::span<const std::uint8_t> foreground,
                                       Connectivity connectivity);

struct PostprocessConfig {
    /// ET components with at most this many voxels are relabelled 0.
    std::size_t et_min_volume = 50;
    Connectivity foreground_connectivity = Connectivity::TwentySix;
    Connectivity hole_connectivity = Connectivity::Six;
    std::uint8_t hole_fill_label = static_cast<std::uint8_t>(Label::NCR);
    /// false: holes are only reported, never filled.
    bool fill_tc_holes = true;

    void validate() const;
};

struct TcHoleReport {
    std::size_t components = 0;  // enclosed non-TC components holding background
    std::size_t voxels = 0;      // background voxels inside them
};

struct PostprocessReport {
    std::size_t removed_et_components = 0;
    std::size_t removed_et_voxels = 0;
    TcHoleReport tc_holes;
    std::size_t filled_voxels = 0;
};

LabelVolume filter_small_et(const LabelVolume& labels, const PostprocessConfig& config,
                            PostprocessReport* report = nullptr);

/// Components of the non-TC voxels (under hole_connectivity) that never touch
/// the volume border. Only their background voxels count; edema is tissue.
TcHoleReport find_tc_holes(const LabelVolume& labels, const PostprocessConfig& config);

/// Relabels the background voxels of every TC hole to hole_fill_label.
LabelVolume repair_tc_holes(const LabelVolume& labels, const PostprocessConfig& config,
                            PostprocessReport* report = nullptr);

/// repair_tc_holes(filter_small_et(labels)).
LabelVolume postprocess_case(const LabelVolume& labels, const PostprocessConfig& config,
                             PostprocessReport* report = nullptr);

}  // namespace gliomakit
