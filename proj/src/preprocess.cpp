#include "gliomakit/preprocess.hpp"
#include "gliomakit/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace gliomakit {

namespace {

void check_mask(const ScalarVolume& volume, std::span<const std::uint8_t> include) {
    if (include.size() != volume.grid().voxel_count())
        throw DimensionMismatch("inclusion mask length does not match the volume");
}

}  // namespace

void NormalizationPolicy::validate() const {
    if (!(epsilon > 0.0)) throw std::invalid_argument("normalization epsilon must be > 0");
}

void RescaleSpec::validate() const {
    if (!(lo_percentile >= 0.0 && lo_percentile < hi_percentile && hi_percentile <= 100.0))
        throw std::invalid_argument("rescale percentiles must satisfy 0 <= lo < hi <= 100");
    if (!(out_min < out_max)) throw std::invalid_argument("rescale output range must satisfy out_min < out_max");
}

std::vector<std::uint8_t> inclusion_mask(const ScalarVolume& volume, const NormalizationPolicy& policy) {
    const auto v = volume.data();
    std::vector<std::uint8_t> mask(v.size(), 1);
    if (!policy.include_background) {
        for (std::size_t i = 0; i < v.size(); ++i) mask[i] = v[i] != 0.0 ? 1 : 0;
    }
    return mask;
}

IntensityStats included_stats(std::span<const double> values, std::span<const std::uint8_t> include) {
    IntensityStats s;
    CompensatedSum sum;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!include[i]) continue;
        sum.add(values[i]);
        ++s.count;
    }
    if (s.count == 0) return s;
    s.mean = sum.value() / static_cast<double>(s.count);
    CompensatedSum sq;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!include[i]) continue;
        const double d = values[i] - s.mean;
        sq.add(d * d);
    }
    s.stddev = std::sqrt(sq.value() / static_cast<double>(s.count));
    return s;
}

ScalarVolume zscore_normalize(const ScalarVolume& volume, const NormalizationPolicy& policy) {
    return zscore_normalize(volume, policy, inclusion_mask(volume, policy));
}

ScalarVolume zscore_normalize(const ScalarVolume& volume, const NormalizationPolicy& policy,
                              std::span<const std::uint8_t> include) {
    policy.validate();
    check_mask(volume, include);
    const auto v = volume.data();
    const IntensityStats s = included_stats(v, include);
    if (s.count == 0) throw DegenerateSpread("z-score: no voxels in the included set");
    if (s.count < 2) throw DegenerateSpread("z-score: fewer than two included voxels");
    if (!(s.stddev > policy.epsilon))
        throw DegenerateSpread("z-score: included intensities are constant (std " + std::to_string(s.stddev) + ")");

    std::vector<double> out(v.size(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (include[i]) out[i] = (v[i] - s.mean) / s.stddev;
    }
    return ScalarVolume(volume.grid(), std::move(out));
}

ScalarVolume rescale_percentiles(const ScalarVolume& volume, const RescaleSpec& spec,
                                 const NormalizationPolicy& policy) {
    return rescale_percentiles(volume, spec, inclusion_mask(volume, policy));
}

ScalarVolume rescale_percentiles(const ScalarVolume& volume, const RescaleSpec& spec,
                                 std::span<const std::uint8_t> include) {
    spec.validate();
    check_mask(volume, include);
    const auto v = volume.data();

    std::vector<double> sorted;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (include[i]) sorted.push_back(v[i]);
    }
    if (sorted.empty()) throw DegenerateSpread("rescale: no voxels in the included set");
    std::sort(sorted.begin(), sorted.end());
    const double p_lo = percentile_linear(sorted, spec.lo_percentile);
    const double p_hi = percentile_linear(sorted, spec.hi_percentile);
    if (!(p_hi > p_lo)) throw DegenerateSpread("rescale: percentile window has zero width");

    const double span = p_hi - p_lo;
    const double out_span = spec.out_max - spec.out_min;
    std::vector<double> out(v.size(), spec.out_min);
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!include[i]) continue;
        const double t = std::clamp((v[i] - p_lo) / span, 0.0, 1.0);
        out[i] = t * out_span + spec.out_min;
    }
    return ScalarVolume(volume.grid(), std::move(out));
}

ScalarVolume preprocess_modality(const ScalarVolume& volume, const PreprocessConfig& config) {
    const auto include = inclusion_mask(volume, config.policy);
    if (config.zscore_first) {
        const ScalarVolume z = zscore_normalize(volume, config.policy, include);
        return rescale_percentiles(z, config.rescale, include);
    }
    const ScalarVolume r = rescale_percentiles(volume, config.rescale, include);
    return zscore_normalize(r, config.policy, include);
}

}  // namespace gliomakit
