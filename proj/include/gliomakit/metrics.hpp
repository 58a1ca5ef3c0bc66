#pragma once

// Overlap and boundary metrics per tumour region, and cohort aggregation.

#include <array>
#include <span>
#include <vector>

#include "gliomakit/volume.hpp"

namespace gliomakit {

struct MetricConfig {
    /// HD95 reported when exactly one of the two masks is empty.
    double empty_pred_penalty_mm = 373.13;
    double empty_empty_dice = 1.0;
    double empty_empty_hd95 = 0.0;

    void validate() const;
};

struct RegionScore {
    Region region = Region::ET;
    double dice = 0.0;
    double hd95_mm = 0.0;
};

struct CaseReport {
    CaseId case_id;
    std::array<RegionScore, 3> scores;  // ordered as kRegions

    const RegionScore& score(Region r) const { return scores[static_cast<std::size_t>(r)]; }
};

struct MetricSummary {
    double mean = 0.0;
    double std = 0.0;
    double median = 0.0;
};

struct RegionSummary {
    Region region = Region::ET;
    MetricSummary dice;
    MetricSummary hd95_mm;
};

struct CohortSummary {
    std::size_t count = 0;
    std::array<RegionSummary, 3> regions;

    const RegionSummary& region(Region r) const { return regions[static_cast<std::size_t>(r)]; }
};

/// 2|A n B| / (|A| + |B|); empty_empty_dice when both are empty.
double dice(const RegionMask& a, const RegionMask& b, const MetricConfig& config = {});

/// Foreground voxels with at least one 6-neighbour outside the mask; the
/// volume border counts as outside.
std::vector<std::size_t> surface_voxels(const RegionMask& mask);

/// Squared Euclidean distance (mm^2) from every voxel to the nearest voxel
/// where `features` is nonzero. Exact separable transform with anisotropic
/// spacing; +inf everywhere when there are no features.
std::vector<double> squared_distance_transform(const Grid& grid, std::span<const std::uint8_t> features);

/// Distance (mm) from each surface voxel of `from` to the surface of `to`,
/// in the storage order of `from`'s surface voxels. Both masks non-empty.
std::vector<double> directed_surface_distances(const RegionMask& from, const RegionMask& to, const Spacing& spacing);

/// max(P_k(d(A->B)), P_k(d(B->A))) with linear-interpolation percentiles;
/// k = 95 gives HD95 and k = 100 the classic Hausdorff distance.
double hausdorff_percentile(const RegionMask& a, const RegionMask& b, const Spacing& spacing, double percent,
                            const MetricConfig& config = {});

/// HD95 in mm using the masks' (identical) voxel spacing.
double hd95(const RegionMask& a, const RegionMask& b, const MetricConfig& config = {});
double hd95(const RegionMask& a, const RegionMask& b, const Spacing& spacing, const MetricConfig& config = {});

CaseReport evaluate_case(const CaseId& id, const LabelVolume& pred, const LabelVolume& truth,
                         const MetricConfig& config = {});

/// Mean, sample std (n-1) and median per region and metric.
CohortSummary aggregate(std::span<const CaseReport> reports);

}  // namespace gliomakit
