#pragma once

// Per-modality intensity preprocessing: z-score standardisation and
// percentile-window rescaling.
//
// Statistics are taken over an "included" voxel set. By default exact zeros
// (skull-stripped background) are excluded; excluded voxels are written as 0
// by the z-score and as out_min by the rescale.

#include <cstdint>
#include <span>
#include <vector>

#include "gliomakit/volume.hpp"

namespace gliomakit {

struct NormalizationPolicy {
    bool include_background = false;
    double epsilon = 1e-8;

    void validate() const;
};

struct RescaleSpec {
    double lo_percentile = 2.0;
    double hi_percentile = 98.0;
    double out_min = 0.0;
    double out_max = 1.0;

    void validate() const;
};

struct PreprocessConfig {
    NormalizationPolicy policy;
    RescaleSpec rescale;
    bool zscore_first = true;
};

struct IntensityStats {
    double mean = 0.0;
    double stddev = 0.0;  // population form (divisor N)
    std::size_t count = 0;
};

/// 1 where the voxel enters the statistics under `policy`.
std::vector<std::uint8_t> inclusion_mask(const ScalarVolume& volume, const NormalizationPolicy& policy);

/// Mean and population standard deviation over the included voxels, by a
/// compensated two-pass sum in storage order.
IntensityStats included_stats(std::span<const double> values, std::span<const std::uint8_t> include);

ScalarVolume zscore_normalize(const ScalarVolume& volume, const NormalizationPolicy& policy);
ScalarVolume zscore_normalize(const ScalarVolume& volume, const NormalizationPolicy& policy,
                              std::span<const std::uint8_t> include);

ScalarVolume rescale_percentiles(const ScalarVolume& volume, const RescaleSpec& spec,
                                 const NormalizationPolicy& policy);
ScalarVolume rescale_percentiles(const ScalarVolume& volume, const RescaleSpec& spec,
                                 std::span<const std::uint8_t> include);

/// Both steps with the included set fixed from the raw input, so voxels the
/// first step maps to exactly 0 are not dropped by the second.
ScalarVolume preprocess_modality(const ScalarVolume& volume, const PreprocessConfig& config);

}  // namespace gliomakit
