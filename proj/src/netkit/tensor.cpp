#include "gliomakit/netkit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "gliomakit/error.hpp"

namespace gliomakit::net {

namespace {

std::size_t product(const Shape5& s) {
    std::size_t n = 1;
    for (auto v : s) n *= v;
    return n;
}

void check_shape(const Shape5& s) {
    for (auto v : s) {
        if (v == 0) throw std::invalid_argument("tensor shape components must be positive: " + shape_str(s));
    }
}

}  // namespace

std::string shape_str(const Shape5& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out;
}

Tensor5::Tensor5(Shape5 shape, double fill) : shape_(shape) {
    check_shape(shape_);
    data_.assign(product(shape_), fill);
}

Tensor5::Tensor5(Shape5 shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    check_shape(shape_);
    if (data_.size() != product(shape_)) throw std::invalid_argument("tensor data length does not match shape");
    if (!all_finite()) throw std::invalid_argument("tensor contains non-finite values");
}

Tensor5 Tensor5::random_uniform(Shape5 shape, std::uint64_t seed, double lo, double hi) {
    Tensor5 t(shape);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& v : t.data_) v = dist(rng);
    return t;
}

bool Tensor5::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double inner_product(const Tensor5& a, const Tensor5& b) {
    if (a.shape() != b.shape()) throw DimensionMismatch("inner product: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    double s = 0.0;
    const auto x = a.data();
    const auto y = b.data();
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

}  // namespace gliomakit::net
