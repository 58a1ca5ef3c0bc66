#include "gliomakit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "gliomakit/stats.hpp"

namespace gliomakit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) along one line:
// out[q] = min_p ((q - p) * step)^2 + f[p], skipping sites with f = inf.
void distance_1d(std::span<const double> f, std::span<double> out, double step, std::vector<std::size_t>& sites,
                 std::vector<double>& bounds) {
    const std::size_t n = f.size();
    sites.clear();
    bounds.clear();
    auto intersect = [&](std::size_t p, std::size_t q) {
        const double xp = static_cast<double>(p) * step;
        const double xq = static_cast<double>(q) * step;
        return ((f[q] + xq * xq) - (f[p] + xp * xp)) / (2.0 * (xq - xp));
    };
    for (std::size_t q = 0; q < n; ++q) {
        if (f[q] == kInf) continue;
        while (!sites.empty()) {
            const double s = intersect(sites.back(), q);
            if (s <= bounds.back()) {
                sites.pop_back();
                bounds.pop_back();
            } else {
                bounds.push_back(s);
                break;
            }
        }
        if (sites.empty()) bounds.push_back(-kInf);
        sites.push_back(q);
    }
    if (sites.empty()) {
        std::fill(out.begin(), out.end(), kInf);
        return;
    }
    // bounds[k] is where sites[k] starts to win.
    std::size_t k = 0;
    for (std::size_t q = 0; q < n; ++q) {
        const double x = static_cast<double>(q) * step;
        while (k + 1 < sites.size() && bounds[k + 1] < x) ++k;
        const double d = (static_cast<double>(q) - static_cast<double>(sites[k])) * step;
        out[q] = d * d + f[sites[k]];
    }
}

std::size_t count_set(std::span<const std::uint8_t> m) {
    return static_cast<std::size_t>(std::count(m.begin(), m.end(), std::uint8_t{1}));
}

}  // namespace

void MetricConfig::validate() const {
    if (!(empty_pred_penalty_mm > 0.0)) throw std::invalid_argument("empty-prediction penalty must be > 0");
}

double dice(const RegionMask& a, const RegionMask& b, const MetricConfig& config) {
    require_same_grid(a.grid(), b.grid(), "dice");
    const auto x = a.data();
    const auto y = b.data();
    std::size_t na = 0, nb = 0, both = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        na += x[i];
        nb += y[i];
        both += x[i] & y[i];
    }
    if (na + nb == 0) return config.empty_empty_dice;
    return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

std::vector<std::size_t> surface_voxels(const RegionMask& mask) {
    const Grid& g = mask.grid();
    const auto m = mask.data();
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < m.size(); ++i) {
        if (!m[i]) continue;
        const auto c = g.coords(i);
        bool surface = false;
        for (std::size_t a = 0; a < 3 && !surface; ++a) {
            for (int dir : {-1, 1}) {
                auto n = c;
                if (dir < 0 && c[a] == 0) {
                    surface = true;
                    break;
                }
                if (dir > 0 && c[a] + 1 == g.dims[a]) {
                    surface = true;
                    break;
                }
                n[a] = dir < 0 ? c[a] - 1 : c[a] + 1;
                if (!m[g.index(n[0], n[1], n[2])]) {
                    surface = true;
                    break;
                }
            }
        }
        if (surface) out.push_back(i);
    }
    return out;
}

std::vector<double> squared_distance_transform(const Grid& grid, std::span<const std::uint8_t> features) {
    if (features.size() != grid.voxel_count()) throw DimensionMismatch("distance transform: mask length");
    const auto [nx, ny, nz] = grid.dims;
    std::vector<double> dist(features.size());
    for (std::size_t i = 0; i < dist.size(); ++i) dist[i] = features[i] ? 0.0 : kInf;

    const std::size_t longest = std::max({nx, ny, nz});
    std::vector<double> line(longest), result(longest);
    std::vector<std::size_t> sites;
    std::vector<double> bounds;
    sites.reserve(longest);
    bounds.reserve(longest);

    auto pass = [&](std::size_t axis, std::size_t len, auto&& index_of, std::size_t outer_a, std::size_t outer_b) {
        const double step = grid.spacing[axis];
        for (std::size_t a = 0; a < outer_a; ++a)
            for (std::size_t b = 0; b < outer_b; ++b) {
                for (std::size_t t = 0; t < len; ++t) line[t] = dist[index_of(a, b, t)];
                distance_1d(std::span<const double>(line.data(), len), std::span<double>(result.data(), len), step,
                            sites, bounds);
                for (std::size_t t = 0; t < len; ++t) dist[index_of(a, b, t)] = result[t];
            }
    };
    pass(2, nz, [&](std::size_t x, std::size_t y, std::size_t z) { return grid.index(x, y, z); }, nx, ny);
    pass(1, ny, [&](std::size_t x, std::size_t z, std::size_t y) { return grid.index(x, y, z); }, nx, nz);
    pass(0, nx, [&](std::size_t y, std::size_t z, std::size_t x) { return grid.index(x, y, z); }, ny, nz);
    return dist;
}

std::vector<double> directed_surface_distances(const RegionMask& from, const RegionMask& to, const Spacing& spacing) {
    require_same_grid(from.grid(), to.grid(), "surface distance");
    Grid grid = to.grid();
    grid.spacing = spacing;
    grid.validate();

    const auto to_surface = surface_voxels(to);
    if (to_surface.empty()) throw std::invalid_argument("surface distance to an empty mask");
    std::vector<std::uint8_t> features(grid.voxel_count(), 0);
    for (std::size_t i : to_surface) features[i] = 1;
    const std::vector<double> sq = squared_distance_transform(grid, features);

    const auto from_surface = surface_voxels(from);
    std::vector<double> out;
    out.reserve(from_surface.size());
    for (std::size_t i : from_surface) out.push_back(std::sqrt(sq[i]));
    return out;
}

double hausdorff_percentile(const RegionMask& a, const RegionMask& b, const Spacing& spacing, double percent,
                            const MetricConfig& config) {
    require_same_grid(a.grid(), b.grid(), "hausdorff");
    if (!(percent >= 0.0 && percent <= 100.0)) throw std::invalid_argument("percentile must lie in [0, 100]");
    const std::size_t na = count_set(a.data());
    const std::size_t nb = count_set(b.data());
    if (na == 0 && nb == 0) return config.empty_empty_hd95;
    if (na == 0 || nb == 0) return config.empty_pred_penalty_mm;

    auto directed = [&](const RegionMask& from, const RegionMask& to) {
        std::vector<double> d = directed_surface_distances(from, to, spacing);
        std::sort(d.begin(), d.end());
        return percentile_linear(d, percent);
    };
    return std::max(directed(a, b), directed(b, a));
}

double hd95(const RegionMask& a, const RegionMask& b, const MetricConfig& config) {
    require_same_grid(a.grid(), b.grid(), "hd95", true);
    return hausdorff_percentile(a, b, a.spacing(), 95.0, config);
}

double hd95(const RegionMask& a, const RegionMask& b, const Spacing& spacing, const MetricConfig& config) {
    return hausdorff_percentile(a, b, spacing, 95.0, config);
}

CaseReport evaluate_case(const CaseId& id, const LabelVolume& pred, const LabelVolume& truth,
                         const MetricConfig& config) {
    config.validate();
    require_same_grid(pred.grid(), truth.grid(), "evaluate_case(" + id.str() + ")", true);
    CaseReport report{id, {}};
    for (std::size_t k = 0; k < kRegions.size(); ++k) {
        const Region r = kRegions[k];
        const RegionMask p = extract_region(pred, r);
        const RegionMask t = extract_region(truth, r);
        report.scores[k] = {r, dice(p, t, config), hd95(p, t, truth.spacing(), config)};
    }
    return report;
}

CohortSummary aggregate(std::span<const CaseReport> reports) {
    if (reports.empty()) throw std::invalid_argument("aggregate: no case reports");
    CohortSummary out;
    out.count = reports.size();
    for (std::size_t k = 0; k < kRegions.size(); ++k) {
        std::vector<double> d, h;
        for (const auto& r : reports) {
            d.push_back(r.scores[k].dice);
            h.push_back(r.scores[k].hd95_mm);
        }
        const auto sd = summarize(d);
        const auto sh = summarize(h);
        out.regions[k] = {kRegions[k], {sd.mean, sd.std, sd.median}, {sh.mean, sh.std, sh.median}};
    }
    return out;
}

}  // namespace gliomakit
