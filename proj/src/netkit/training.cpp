#include "gliomakit/netkit/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "gliomakit/error.hpp"

namespace gliomakit::net {

namespace {

void check_inputs(const Tensor5& pred, const Tensor5& target, double eps) {
    if (pred.shape() != target.shape())
        throw DimensionMismatch("soft dice: pred " + shape_str(pred.shape()) + " vs target " + shape_str(target.shape()));
    if (!(eps >= 0.0)) throw std::invalid_argument("soft dice: eps must be >= 0");
    for (double p : pred.data()) {
        if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("soft dice: predictions must lie in [0, 1]");
    }
}

struct SliceSums {
    double intersection = 0.0;
    double total = 0.0;  // sum p + sum g
};

SliceSums slice_sums(std::span<const double> p, std::span<const double> g) {
    SliceSums s;
    for (std::size_t i = 0; i < p.size(); ++i) {
        s.intersection += p[i] * g[i];
        s.total += p[i] + g[i];
    }
    return s;
}

}  // namespace

double soft_dice_loss(const Tensor5& pred, const Tensor5& target, double eps) {
    check_inputs(pred, target, eps);
    double loss = 0.0;
    for (std::size_t n = 0; n < pred.batch(); ++n)
        for (std::size_t c = 0; c < pred.channels(); ++c) {
            const SliceSums s = slice_sums(pred.channel(n, c), target.channel(n, c));
            const double denom = s.total + eps;
            // 0/0 (both empty, eps = 0) counts as perfect agreement
            loss += denom > 0.0 ? 1.0 - (2.0 * s.intersection + eps) / denom : 0.0;
        }
    return loss / static_cast<double>(pred.batch() * pred.channels());
}

Tensor5 soft_dice_grad(const Tensor5& pred, const Tensor5& target, double eps) {
    check_inputs(pred, target, eps);
    Tensor5 grad(pred.shape());
    const auto slices = static_cast<double>(pred.batch() * pred.channels());
    for (std::size_t n = 0; n < pred.batch(); ++n)
        for (std::size_t c = 0; c < pred.channels(); ++c) {
            const auto g = target.channel(n, c);
            const SliceSums s = slice_sums(pred.channel(n, c), g);
            const double denom = s.total + eps;
            auto out = grad.channel(n, c);
            if (denom <= 0.0) continue;
            const double num = 2.0 * s.intersection + eps;
            const double scale = 1.0 / (denom * denom * slices);
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = -(2.0 * g[i] * denom - num) * scale;
        }
    return grad;
}

void TrainingSchedule::validate() const {
    if (!(eta_min >= 0.0 && initial_lr > eta_min)) throw std::invalid_argument("schedule needs initial_lr > eta_min >= 0");
    if (epochs < 1) throw std::invalid_argument("schedule needs at least one epoch");
    if (batch_size < 1) throw std::invalid_argument("schedule needs a positive batch size");
}

double cosine_lr(std::size_t step, std::size_t total_steps, const TrainingSchedule& schedule) {
    schedule.validate();
    if (total_steps < 1) throw std::invalid_argument("cosine schedule needs total_steps >= 1");
    if (step > total_steps) throw std::out_of_range("cosine schedule step beyond total_steps");
    if (step == 0) return schedule.initial_lr;
    if (step == total_steps) return schedule.eta_min;
    const double t = static_cast<double>(step) / static_cast<double>(total_steps);
    const double lr =
        schedule.eta_min + 0.5 * (schedule.initial_lr - schedule.eta_min) * (1.0 + std::cos(std::numbers::pi * t));
    return std::clamp(lr, schedule.eta_min, schedule.initial_lr);
}

}  // namespace gliomakit::net
