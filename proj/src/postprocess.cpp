#include "gliomakit/postprocess.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace gliomakit {

namespace {

// Labels each component of `foreground` with a BFS; ids in scan order.
ComponentLabeling label_components(const Grid& grid, std::span<const std::uint8_t> foreground,
                                   Connectivity connectivity) {
    ComponentLabeling out;
    out.grid = grid;
    out.connectivity = connectivity;
    out.ids.assign(foreground.size(), 0);

    const auto offsets = neighbor_offsets(connectivity);
    const auto nx = static_cast<long>(grid.dims[0]);
    const auto ny = static_cast<long>(grid.dims[1]);
    const auto nz = static_cast<long>(grid.dims[2]);
    std::vector<std::size_t> queue;
    queue.reserve(1024);

    for (std::size_t seed = 0; seed < foreground.size(); ++seed) {
        if (!foreground[seed] || out.ids[seed] != 0) continue;
        const auto id = static_cast<std::uint32_t>(out.sizes.size() + 1);
        std::size_t size = 0;
        queue.clear();
        queue.push_back(seed);
        out.ids[seed] = id;
        for (std::size_t head = 0; head < queue.size(); ++head) {
            const std::size_t cur = queue[head];
            ++size;
            const auto c = grid.coords(cur);
            const long x = static_cast<long>(c[0]), y = static_cast<long>(c[1]), z = static_cast<long>(c[2]);
            for (const auto& o : offsets) {
                const long xx = x + o[0], yy = y + o[1], zz = z + o[2];
                if (xx < 0 || yy < 0 || zz < 0 || xx >= nx || yy >= ny || zz >= nz) continue;
                const auto n = static_cast<std::size_t>((xx * ny + yy) * nz + zz);
                if (foreground[n] && out.ids[n] == 0) {
                    out.ids[n] = id;
                    queue.push_back(n);
                }
            }
        }
        out.sizes.push_back(size);
    }
    return out;
}

}  // namespace

Connectivity connectivity_from_int(int n) {
    switch (n) {
        case 6: return Connectivity::Six;
        case 18: return Connectivity::Eighteen;
        case 26: return Connectivity::TwentySix;
        default: throw std::invalid_argument("connectivity must be 6, 18 or 26 (got " + std::to_string(n) + ")");
    }
}

std::vector<std::array<int, 3>> neighbor_offsets(Connectivity connectivity) {
    const int max_nonzero = connectivity == Connectivity::Six ? 1 : connectivity == Connectivity::Eighteen ? 2 : 3;
    std::vector<std::array<int, 3>> out;
    for (int dx = -1; dx <= 1; ++dx)
        for (int dy = -1; dy <= 1; ++dy)
            for (int dz = -1; dz <= 1; ++dz) {
                const int nonzero = std::abs(dx) + std::abs(dy) + std::abs(dz);
                if (nonzero >= 1 && nonzero <= max_nonzero) out.push_back({dx, dy, dz});
            }
    return out;
}

ComponentLabeling connected_components(const RegionMask& mask, Connectivity connectivity) {
    return label_components(mask.grid(), mask.data(), connectivity);
}

ComponentLabeling connected_components(const Grid& grid, std::span<const std::uint8_t> foreground,
                                       Connectivity connectivity) {
    if (foreground.size() != grid.voxel_count()) throw DimensionMismatch("connected_components: mask length");
    return label_components(grid, foreground, connectivity);
}

void PostprocessConfig::validate() const {
    if (!region_contains(Region::TC, hole_fill_label))
        throw std::invalid_argument("hole_fill_label must be a tumour-core label (1 or 3)");
}

LabelVolume filter_small_et(const LabelVolume& labels, const PostprocessConfig& config, PostprocessReport* report) {
    config.validate();
    const RegionMask et = extract_region(labels, Region::ET);
    const ComponentLabeling cc = connected_components(et, config.foreground_connectivity);

    std::vector<std::uint8_t> out(labels.data().begin(), labels.data().end());
    std::size_t removed_voxels = 0, removed_components = 0;
    for (std::size_t k = 0; k < cc.sizes.size(); ++k) {
        if (cc.sizes[k] <= config.et_min_volume) {
            ++removed_components;
            removed_voxels += cc.sizes[k];
        }
    }
    if (removed_components > 0) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            const auto id = cc.ids[i];
            if (id != 0 && cc.sizes[id - 1] <= config.et_min_volume) out[i] = 0;
        }
    }
    if (report) {
        report->removed_et_components += removed_components;
        report->removed_et_voxels += removed_voxels;
    }
    return LabelVolume(labels.grid(), std::move(out));
}

namespace {

struct HoleScan {
    ComponentLabeling cc;
    std::vector<std::uint8_t> is_hole;  // indexed by id - 1
    TcHoleReport report;
};

HoleScan scan_tc_holes(const LabelVolume& labels, const PostprocessConfig& config) {
    const auto data = labels.data();
    const Grid& grid = labels.grid();
    std::vector<std::uint8_t> outside_tc(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) outside_tc[i] = region_contains(Region::TC, data[i]) ? 0 : 1;

    HoleScan scan{connected_components(grid, outside_tc, config.hole_connectivity), {}, {}};
    const std::size_t n = scan.cc.num_components();
    std::vector<std::uint8_t> touches_border(n, 0);
    std::vector<std::size_t> background(n, 0);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto id = scan.cc.ids[i];
        if (id == 0) continue;
        if (grid.on_border(i)) touches_border[id - 1] = 1;
        if (data[i] == 0) ++background[id - 1];
    }
    scan.is_hole.assign(n, 0);
    for (std::size_t k = 0; k < n; ++k) {
        if (!touches_border[k] && background[k] > 0) {
            scan.is_hole[k] = 1;
            ++scan.report.components;
            scan.report.voxels += background[k];
        }
    }
    return scan;
}

}  // namespace

TcHoleReport find_tc_holes(const LabelVolume& labels, const PostprocessConfig& config) {
    return scan_tc_holes(labels, config).report;
}

LabelVolume repair_tc_holes(const LabelVolume& labels, const PostprocessConfig& config, PostprocessReport* report) {
    config.validate();
    const HoleScan scan = scan_tc_holes(labels, config);
    if (report) report->tc_holes = scan.report;
    if (!config.fill_tc_holes || scan.report.components == 0) return labels;

    std::vector<std::uint8_t> out(labels.data().begin(), labels.data().end());
    std::size_t filled = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto id = scan.cc.ids[i];
        if (id != 0 && scan.is_hole[id - 1] && out[i] == 0) {
            out[i] = config.hole_fill_label;
            ++filled;
        }
    }
    if (report) report->filled_voxels += filled;
    return LabelVolume(labels.grid(), std::move(out));
}

LabelVolume postprocess_case(const LabelVolume& labels, const PostprocessConfig& config, PostprocessReport* report) {
    return repair_tc_holes(filter_small_et(labels, config, report), config, report);
}

}  // namespace gliomakit
