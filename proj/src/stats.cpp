#include "gliomakit/stats.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace gliomakit {

double percentile_linear(std::span<const double> sorted, double percent) {
    if (sorted.empty()) throw std::invalid_argument("percentile of an empty set");
    const double h = static_cast<double>(sorted.size() - 1) * percent / 100.0;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

SampleSummary summarize(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("summary of an empty set");
    SampleSummary s;
    CompensatedSum sum;
    for (double v : values) sum.add(v);
    const auto n = static_cast<double>(values.size());
    s.mean = sum.value() / n;
    if (values.size() > 1) {
        CompensatedSum sq;
        for (double v : values) sq.add((v - s.mean) * (v - s.mean));
        s.std = std::sqrt(sq.value() / (n - 1.0));
    }
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t mid = sorted.size() / 2;
    s.median = sorted.size() % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
    return s;
}

}  // namespace gliomakit
