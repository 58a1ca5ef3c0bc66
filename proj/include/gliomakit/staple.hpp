#pragma once

// Ensemble fusion: binary STAPLE (expectation-maximisation estimate of the
// hidden true mask and each rater's sensitivity/specificity), a majority-vote
// baseline, and per-region fusion of whole label maps.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gliomakit/volume.hpp"

namespace gliomakit {

/// Binary decisions of J raters over N voxels, stored rater-major.
class RaterDecisions {
public:
    RaterDecisions(Region region, Grid grid, std::size_t num_raters, std::vector<std::uint8_t> decisions);

    /// One rater per mask; all masks must share dims and spacing.
    static RaterDecisions from_masks(std::span<const RegionMask> masks);

    std::size_t num_raters() const { return num_raters_; }
    std::size_t num_voxels() const { return num_voxels_; }
    Region region() const { return region_; }
    const Grid& grid() const { return grid_; }

    bool at(std::size_t voxel, std::size_t rater) const { return decisions_[rater * num_voxels_ + voxel] != 0; }
    std::span<const std::uint8_t> rater(std::size_t j) const {
        return std::span<const std::uint8_t>(decisions_).subspan(j * num_voxels_, num_voxels_);
    }

private:
    Region region_;
    Grid grid_;
    std::size_t num_raters_;
    std::size_t num_voxels_;
    std::vector<std::uint8_t> decisions_;
};

struct RaterPerformance {
    std::vector<double> sensitivity;  // p_j
    std::vector<double> specificity;  // q_j
};

inline constexpr double kPerformanceClamp = 1e-6;

struct StapleConfig {
    /// Foreground prior f; empty means the mean rater foreground fraction.
    std::optional<double> prior;
    /// Stop when the mean absolute change of W drops below this.
    double tolerance = 1e-7;
    int max_iterations = 100;
    double decision_threshold = 0.5;
    double initial_sensitivity = 0.99999;
    double initial_specificity = 0.99999;

    void validate() const;
};

struct StapleResult {
    RegionMask mask;
    RaterPerformance performance;
    std::vector<double> weights;  // W_i, posterior foreground probability
    double prior = 0.0;
    int iterations = 0;
    bool converged = false;
    /// Auto prior came out 0 or 1 (every rater empty, or every rater full);
    /// the mask is then returned as-is without running EM.
    bool degenerate = false;
    /// Observed-data log-likelihood at the parameters used by each E-step.
    std::vector<double> log_likelihood;
};

StapleResult staple_binary(const RaterDecisions& decisions, const StapleConfig& config);

/// Foreground iff strictly more than half of the raters say so.
RegionMask majority_vote(const RaterDecisions& decisions);

enum class FusionMethod { Staple, Majority };

/// Fuses ET, TC and WT independently, then rebuilds a label map with
/// reconstruct_labels (which repairs any loss of nesting).
LabelVolume fuse_labels(std::span<const LabelVolume> predictions, const StapleConfig& config, FusionMethod method);

}  // namespace gliomakit
