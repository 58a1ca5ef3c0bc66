#pragma once

#include <cmath>
#include <span>

namespace gliomakit {

/// Neumaier-compensated running sum; deterministic for a fixed input order.
class CompensatedSum {
public:
    void add(double v) {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v)) {
            comp_ += (sum_ - t) + v;
        } else {
            comp_ += (v - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

/// Percentile with linear interpolation between closest ranks ("linear"
/// convention): rank h = (n-1) p / 100. `sorted` must be ascending and non-empty.
double percentile_linear(std::span<const double> sorted, double percent);

struct SampleSummary {
    double mean = 0.0;
    double std = 0.0;  // sample form (divisor n-1), 0 for a single value
    double median = 0.0;
};

/// Throws std::invalid_argument on empty input.
SampleSummary summarize(std::span<const double> values);

}  // namespace gliomakit
