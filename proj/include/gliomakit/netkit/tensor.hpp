#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gliomakit::net {

/// (batch, channels, depth, height, width)
using Shape5 = std::array<std::size_t, 5>;
using Triple = std::array<std::size_t, 3>;

std::string shape_str(const Shape5& shape);

/// Dense 5-D tensor in NCDHW order (width fastest).
class Tensor5 {
public:
    Tensor5() = default;
    explicit Tensor5(Shape5 shape, double fill = 0.0);
    /// Throws std::invalid_argument on size mismatch or non-finite values.
    Tensor5(Shape5 shape, std::vector<double> data);

    /// Uniform values in [lo, hi) from a seeded mt19937_64.
    static Tensor5 random_uniform(Shape5 shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0);

    const Shape5& shape() const { return shape_; }
    std::size_t batch() const { return shape_[0]; }
    std::size_t channels() const { return shape_[1]; }
    Triple spatial() const { return {shape_[2], shape_[3], shape_[4]}; }
    std::size_t spatial_size() const { return shape_[2] * shape_[3] * shape_[4]; }
    std::size_t size() const { return data_.size(); }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }

    std::size_t offset(std::size_t n, std::size_t c, std::size_t d, std::size_t h, std::size_t w) const {
        return (((n * shape_[1] + c) * shape_[2] + d) * shape_[3] + h) * shape_[4] + w;
    }
    double& operator()(std::size_t n, std::size_t c, std::size_t d, std::size_t h, std::size_t w) {
        return data_[offset(n, c, d, h, w)];
    }
    double operator()(std::size_t n, std::size_t c, std::size_t d, std::size_t h, std::size_t w) const {
        return data_[offset(n, c, d, h, w)];
    }

    /// Contiguous D*H*W block of one (sample, channel) pair.
    std::span<const double> channel(std::size_t n, std::size_t c) const {
        return std::span<const double>(data_).subspan(offset(n, c, 0, 0, 0), spatial_size());
    }
    std::span<double> channel(std::size_t n, std::size_t c) {
        return std::span<double>(data_).subspan(offset(n, c, 0, 0, 0), spatial_size());
    }

    bool all_finite() const;

    bool operator==(const Tensor5&) const = default;

private:
    Shape5 shape_{0, 0, 0, 0, 0};
    std::vector<double> data_;
};

/// Sum of elementwise products; shapes must match.
double inner_product(const Tensor5& a, const Tensor5& b);

}  // namespace gliomakit::net
