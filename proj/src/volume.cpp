#include "gliomakit/volume.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gliomakit {

Affine diagonal_affine(const Spacing& spacing) {
    Affine a{};
    for (std::size_t r = 0; r < 3; ++r) a[r][r] = spacing[r];
    return a;
}

Grid Grid::with_dims(Dims dims, Spacing spacing) {
    Grid g;
    g.dims = dims;
    g.spacing = spacing;
    g.affine = diagonal_affine(spacing);
    g.validate();
    return g;
}

bool Grid::on_border(std::size_t idx) const {
    const auto c = coords(idx);
    for (std::size_t a = 0; a < 3; ++a) {
        if (c[a] == 0 || c[a] + 1 == dims[a]) return true;
    }
    return false;
}

void Grid::validate() const {
    for (std::size_t a = 0; a < 3; ++a) {
        if (dims[a] == 0) throw std::invalid_argument("grid: zero-length axis");
        if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
            throw std::invalid_argument("grid: spacing must be positive and finite");
    }
}

bool Grid::same_spacing(const Grid& other, double rel_tol) const {
    for (std::size_t a = 0; a < 3; ++a) {
        const double scale = std::max(std::abs(spacing[a]), std::abs(other.spacing[a]));
        if (std::abs(spacing[a] - other.spacing[a]) > rel_tol * scale) return false;
    }
    return true;
}

namespace {

std::string dims_str(const Dims& d) {
    return std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]);
}

}  // namespace

void require_same_grid(const Grid& a, const Grid& b, std::string_view what, bool check_spacing) {
    if (!a.same_dims(b)) {
        throw DimensionMismatch(std::string(what) + ": dims " + dims_str(a.dims) + " vs " + dims_str(b.dims));
    }
    if (check_spacing && !a.same_spacing(b)) {
        throw DimensionMismatch(std::string(what) + ": voxel spacing differs");
    }
}

ScalarVolume::ScalarVolume(Grid grid, std::vector<double> data) : grid_(std::move(grid)), data_(std::move(data)) {
    grid_.validate();
    if (data_.size() != grid_.voxel_count())
        throw std::invalid_argument("ScalarVolume: data length does not match dims");
    if (!std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); }))
        throw std::invalid_argument("ScalarVolume: non-finite intensity");
}

LabelVolume::LabelVolume(Grid grid, std::vector<std::uint8_t> data) : grid_(std::move(grid)), data_(std::move(data)) {
    grid_.validate();
    if (data_.size() != grid_.voxel_count())
        throw std::invalid_argument("LabelVolume: data length does not match dims");
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (data_[i] > kMaxLabel)
            throw InvalidLabel("label " + std::to_string(data_[i]) + " at voxel " + std::to_string(i));
    }
}

LabelVolume LabelVolume::zeros(const Grid& grid) {
    return LabelVolume(grid, std::vector<std::uint8_t>(grid.voxel_count(), 0));
}

std::string_view region_name(Region region) {
    switch (region) {
        case Region::ET: return "ET";
        case Region::TC: return "TC";
        case Region::WT: return "WT";
    }
    return "?";
}

Region region_from_name(std::string_view name) {
    for (Region r : kRegions) {
        if (region_name(r) == name) return r;
    }
    throw std::invalid_argument("unknown region '" + std::string(name) + "'");
}

RegionMask::RegionMask(Region region, Grid grid, std::vector<std::uint8_t> data)
    : region_(region), grid_(std::move(grid)), data_(std::move(data)) {
    grid_.validate();
    if (data_.size() != grid_.voxel_count())
        throw std::invalid_argument("RegionMask: data length does not match dims");
    for (auto& v : data_) v = v != 0 ? 1 : 0;
}

std::size_t RegionMask::count() const {
    return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

CaseId::CaseId(std::string id) : id_(std::move(id)) {
    if (id_.empty()) throw std::invalid_argument("case id must be non-empty");
    if (id_ == "." || id_ == "..") throw std::invalid_argument("case id '" + id_ + "' is not a usable name");
    if (id_.find_first_of(std::string_view("/\\\0", 3)) != std::string::npos)
        throw std::invalid_argument("case id '" + id_ + "' contains a path separator");
}

RegionMask extract_region(const LabelVolume& labels, Region region) {
    const auto src = labels.data();
    std::vector<std::uint8_t> out(src.size());
    std::transform(src.begin(), src.end(), out.begin(),
                   [region](std::uint8_t l) { return region_contains(region, l) ? 1 : 0; });
    return RegionMask(region, labels.grid(), std::move(out));
}

LabelVolume reconstruct_labels(const RegionMask& et, const RegionMask& tc, const RegionMask& wt) {
    require_same_grid(et.grid(), tc.grid(), "reconstruct_labels(ET, TC)", true);
    require_same_grid(et.grid(), wt.grid(), "reconstruct_labels(ET, WT)", true);

    const auto e = et.data();
    const auto t = tc.data();
    const auto w = wt.data();
    std::vector<std::uint8_t> out(e.size(), 0);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!w[i]) continue;
        if (!t[i]) {
            out[i] = static_cast<std::uint8_t>(Label::ED);
        } else {
            out[i] = static_cast<std::uint8_t>(e[i] ? Label::ET : Label::NCR);
        }
    }
    return LabelVolume(wt.grid(), std::move(out));
}

}  // namespace gliomakit
