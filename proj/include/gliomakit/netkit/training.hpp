#pragma once

// Training-time formulas that can be checked without a training loop: the
// soft Dice loss with its analytic gradient, and the cosine learning-rate
// schedule.

#include <cstddef>

#include "gliomakit/netkit/tensor.hpp"

namespace gliomakit::net {

/// Per (sample, class) slice with I = sum p g and S = sum p + sum g:
///   L_s = 1 - (2 I + eps) / (S + eps)
/// and the loss is the mean of L_s over all slices. eps sits in both the
/// numerator and the denominator.
double soft_dice_loss(const Tensor5& pred, const Tensor5& target, double eps = 1e-5);

/// dL/dp_i = -(2 g_i (S + eps) - (2 I + eps)) / ((S + eps)^2 * slices)
Tensor5 soft_dice_grad(const Tensor5& pred, const Tensor5& target, double eps = 1e-5);

struct TrainingSchedule {
    double initial_lr = 6e-5;
    double weight_decay = 1e-5;
    int epochs = 40;
    int batch_size = 4;
    double eta_min = 0.0;

    void validate() const;
};

/// eta_min + (lr0 - eta_min) (1 + cos(pi t / T)) / 2; t = 0 and t = T
/// return lr0 and eta_min exactly.
double cosine_lr(std::size_t step, std::size_t total_steps, const TrainingSchedule& schedule);

}  // namespace gliomakit::net
