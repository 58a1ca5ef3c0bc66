#include "gliomakit/staple.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gliomakit {

namespace {

double clamp_rate(double v) { return std::clamp(v, kPerformanceClamp, 1.0 - kPerformanceClamp); }

double mean_foreground_fraction(const RaterDecisions& d) {
    std::size_t marked = 0;
    for (std::size_t j = 0; j < d.num_raters(); ++j) {
        const auto r = d.rater(j);
        marked += static_cast<std::size_t>(std::count(r.begin(), r.end(), std::uint8_t{1}));
    }
    return static_cast<double>(marked) / (static_cast<double>(d.num_raters()) * static_cast<double>(d.num_voxels()));
}

}  // namespace

RaterDecisions::RaterDecisions(Region region, Grid grid, std::size_t num_raters, std::vector<std::uint8_t> decisions)
    : region_(region), grid_(std::move(grid)), num_raters_(num_raters), num_voxels_(grid_.voxel_count()),
      decisions_(std::move(decisions)) {
    if (num_raters_ == 0) throw std::invalid_argument("STAPLE needs at least one rater");
    if (decisions_.size() != num_raters_ * num_voxels_)
        throw std::invalid_argument("rater decisions: expected J*N entries");
    for (auto& v : decisions_) v = v != 0 ? 1 : 0;
}

RaterDecisions RaterDecisions::from_masks(std::span<const RegionMask> masks) {
    if (masks.empty()) throw std::invalid_argument("STAPLE needs at least one rater");
    std::vector<std::uint8_t> all;
    all.reserve(masks.size() * masks.front().grid().voxel_count());
    for (const auto& m : masks) {
        require_same_grid(masks.front().grid(), m.grid(), "rater masks", true);
        all.insert(all.end(), m.data().begin(), m.data().end());
    }
    return RaterDecisions(masks.front().region(), masks.front().grid(), masks.size(), std::move(all));
}

void StapleConfig::validate() const {
    if (prior && !(*prior > 0.0 && *prior < 1.0)) throw std::invalid_argument("STAPLE prior must lie in (0, 1)");
    if (!(tolerance > 0.0)) throw std::invalid_argument("STAPLE tolerance must be > 0");
    if (max_iterations < 1) throw std::invalid_argument("STAPLE max_iterations must be >= 1");
    if (!(decision_threshold > 0.0 && decision_threshold < 1.0))
        throw std::invalid_argument("STAPLE decision threshold must lie in (0, 1)");
    if (!(initial_sensitivity > 0.0 && initial_sensitivity < 1.0) ||
        !(initial_specificity > 0.0 && initial_specificity < 1.0))
        throw std::invalid_argument("STAPLE initial sensitivity/specificity must lie in (0, 1)");
}

StapleResult staple_binary(const RaterDecisions& d, const StapleConfig& config) {
    config.validate();
    const std::size_t J = d.num_raters();
    const std::size_t N = d.num_voxels();

    StapleResult res{RegionMask(d.region(), d.grid(), std::vector<std::uint8_t>(N, 0)), {}, {}, 0.0, 0, false, false, {}};
    res.performance.sensitivity.assign(J, clamp_rate(config.initial_sensitivity));
    res.performance.specificity.assign(J, clamp_rate(config.initial_specificity));

    const double f = config.prior ? *config.prior : mean_foreground_fraction(d);
    res.prior = f;
    if (f <= 0.0 || f >= 1.0) {
        res.degenerate = true;
        res.weights.assign(N, f >= 1.0 ? 1.0 : 0.0);
        res.mask = RegionMask(d.region(), d.grid(), std::vector<std::uint8_t>(N, f >= 1.0 ? 1 : 0));
        return res;
    }

    auto& p = res.performance.sensitivity;
    auto& q = res.performance.specificity;
    const double log_f = std::log(f);
    const double log_1mf = std::log1p(-f);

    std::vector<double> W(N, 0.0);
    std::vector<double> W_prev;
    std::vector<double> la(N), lb(N);

    for (int iter = 0; iter < config.max_iterations; ++iter) {
        // E-step in log space: la = log f P(D_i | T=1), lb = log (1-f) P(D_i | T=0).
        std::fill(la.begin(), la.end(), log_f);
        std::fill(lb.begin(), lb.end(), log_1mf);
        for (std::size_t j = 0; j < J; ++j) {
            const double lp = std::log(p[j]), l1mp = std::log1p(-p[j]);
            const double lq = std::log(q[j]), l1mq = std::log1p(-q[j]);
            const auto r = d.rater(j);
            for (std::size_t i = 0; i < N; ++i) {
                if (r[i]) {
                    la[i] += lp;
                    lb[i] += l1mq;
                } else {
                    la[i] += l1mp;
                    lb[i] += lq;
                }
            }
        }
        double loglik = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double m = std::max(la[i], lb[i]);
            const double ea = std::exp(la[i] - m);
            const double eb = std::exp(lb[i] - m);
            W[i] = ea / (ea + eb);
            loglik += m + std::log(ea + eb);
        }
        res.log_likelihood.push_back(loglik);
        res.iterations = iter + 1;

        // M-step.
        double sum_w = 0.0;
        for (double w : W) sum_w += w;
        const double sum_1mw = static_cast<double>(N) - sum_w;
        for (std::size_t j = 0; j < J; ++j) {
            const auto r = d.rater(j);
            double tp = 0.0, tn = 0.0;
            for (std::size_t i = 0; i < N; ++i) {
                if (r[i]) {
                    tp += W[i];
                } else {
                    tn += 1.0 - W[i];
                }
            }
            if (sum_w > 0.0) p[j] = clamp_rate(tp / sum_w);
            if (sum_1mw > 0.0) q[j] = clamp_rate(tn / sum_1mw);
        }

        if (!W_prev.empty()) {
            double change = 0.0;
            for (std::size_t i = 0; i < N; ++i) change += std::abs(W[i] - W_prev[i]);
            if (change / static_cast<double>(N) < config.tolerance) {
                res.converged = true;
                break;
            }
        }
        W_prev = W;
    }

    std::vector<std::uint8_t> mask(N);
    for (std::size_t i = 0; i < N; ++i) mask[i] = W[i] >= config.decision_threshold ? 1 : 0;
    res.mask = RegionMask(d.region(), d.grid(), std::move(mask));
    res.weights = std::move(W);
    return res;
}

RegionMask majority_vote(const RaterDecisions& d) {
    const std::size_t J = d.num_raters();
    std::vector<std::size_t> votes(d.num_voxels(), 0);
    for (std::size_t j = 0; j < J; ++j) {
        const auto r = d.rater(j);
        for (std::size_t i = 0; i < votes.size(); ++i) votes[i] += r[i];
    }
    std::vector<std::uint8_t> mask(votes.size());
    for (std::size_t i = 0; i < votes.size(); ++i) mask[i] = 2 * votes[i] > J ? 1 : 0;
    return RegionMask(d.region(), d.grid(), std::move(mask));
}

LabelVolume fuse_labels(std::span<const LabelVolume> predictions, const StapleConfig& config, FusionMethod method) {
    if (predictions.empty()) throw std::invalid_argument("fuse_labels: no predictions");
    for (const auto& p : predictions) require_same_grid(predictions.front().grid(), p.grid(), "fuse_labels", true);

    std::vector<RegionMask> fused;
    for (Region region : kRegions) {
        std::vector<RegionMask> masks;
        masks.reserve(predictions.size());
        for (const auto& p : predictions) masks.push_back(extract_region(p, region));
        const auto decisions = RaterDecisions::from_masks(masks);
        fused.push_back(method == FusionMethod::Staple ? staple_binary(decisions, config).mask : majority_vote(decisions));
    }
    return reconstruct_labels(fused[0], fused[1], fused[2]);
}

}  // namespace gliomakit
