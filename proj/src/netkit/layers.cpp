#include "gliomakit/netkit/layers.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "gliomakit/error.hpp"

namespace gliomakit::net {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeom {
    std::size_t in_channels;
    std::size_t out_channels;
    Triple kernel;
    Triple stride;
    Triple padding;
};

// Keeps the im2col buffer below ~128 MB of doubles.
constexpr std::size_t kMaxColumnEntries = std::size_t{16} << 20;
constexpr std::size_t kTargetColumns = 2048;

Tensor5 conv_core(const Tensor5& x, std::span<const double> w, std::span<const double> b, const ConvGeom& g) {
    if (x.channels() != g.in_channels)
        throw DimensionMismatch("conv3d: input has " + std::to_string(x.channels()) + " channels, layer expects " +
                                std::to_string(g.in_channels));
    const Triple in = x.spatial();
    Triple out{};
    for (std::size_t a = 0; a < 3; ++a) {
        if (in[a] + 2 * g.padding[a] < g.kernel[a]) throw std::invalid_argument("conv3d: kernel larger than padded input");
        out[a] = (in[a] + 2 * g.padding[a] - g.kernel[a]) / g.stride[a] + 1;
    }

    const std::size_t K = g.kernel[0] * g.kernel[1] * g.kernel[2];
    const std::size_t rows = g.in_channels * K;
    const std::size_t plane = out[1] * out[2];
    std::size_t chunk = std::clamp<std::size_t>((kTargetColumns + plane - 1) / plane, 1, out[0]);
    chunk = std::max<std::size_t>(1, std::min(chunk, kMaxColumnEntries / std::max<std::size_t>(1, rows * plane)));

    Tensor5 y({x.batch(), g.out_channels, out[0], out[1], out[2]});
    const Eigen::Map<const RowMatrix> weights(w.data(), static_cast<Eigen::Index>(g.out_channels),
                                              static_cast<Eigen::Index>(rows));
    std::vector<double> col(rows * chunk * plane);
    RowMatrix result;

    const auto pad0 = static_cast<long>(g.padding[0]), pad1 = static_cast<long>(g.padding[1]),
               pad2 = static_cast<long>(g.padding[2]);
    const auto in0 = static_cast<long>(in[0]), in1 = static_cast<long>(in[1]), in2 = static_cast<long>(in[2]);

    for (std::size_t n = 0; n < x.batch(); ++n) {
        for (std::size_t od0 = 0; od0 < out[0]; od0 += chunk) {
            const std::size_t count = std::min(chunk, out[0] - od0);
            const std::size_t cols = count * plane;
            for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
                const auto src = x.channel(n, ci);
                for (std::size_t kd = 0; kd < g.kernel[0]; ++kd)
                    for (std::size_t kh = 0; kh < g.kernel[1]; ++kh)
                        for (std::size_t kw = 0; kw < g.kernel[2]; ++kw) {
                            const std::size_t r = ((ci * g.kernel[0] + kd) * g.kernel[1] + kh) * g.kernel[2] + kw;
                            double* dst = col.data() + r * cols;
                            for (std::size_t t = 0; t < count; ++t) {
                                const long id = static_cast<long>((od0 + t) * g.stride[0] + kd) - pad0;
                                for (std::size_t oh = 0; oh < out[1]; ++oh) {
                                    const long ih = static_cast<long>(oh * g.stride[1] + kh) - pad1;
                                    double* row = dst + t * plane + oh * out[2];
                                    if (id < 0 || id >= in0 || ih < 0 || ih >= in1) {
                                        std::fill(row, row + out[2], 0.0);
                                        continue;
                                    }
                                    const double* line = src.data() + (id * in1 + ih) * in2;
                                    for (std::size_t ow = 0; ow < out[2]; ++ow) {
                                        const long iw = static_cast<long>(ow * g.stride[2] + kw) - pad2;
                                        row[ow] = (iw >= 0 && iw < in2) ? line[iw] : 0.0;
                                    }
                                }
                            }
                        }
            }
            const Eigen::Map<const RowMatrix> columns(col.data(), static_cast<Eigen::Index>(rows),
                                                      static_cast<Eigen::Index>(cols));
            result.noalias() = weights * columns;
            for (std::size_t co = 0; co < g.out_channels; ++co) {
                double* dst = y.channel(n, co).data() + od0 * plane;
                const double bias = b.empty() ? 0.0 : b[co];
                const double* src = result.data() + co * cols;
                for (std::size_t i = 0; i < cols; ++i) dst[i] = src[i] + bias;
            }
        }
    }
    return y;
}

Tensor5 transposed_core(const Tensor5& x, std::span<const double> w, std::span<const double> b, const ConvGeom& g) {
    if (x.channels() != g.in_channels)
        throw DimensionMismatch("transposed conv3d: input has " + std::to_string(x.channels()) +
                                " channels, layer expects " + std::to_string(g.in_channels));
    const Triple in = x.spatial();
    Triple out{};
    for (std::size_t a = 0; a < 3; ++a) {
        const long size = static_cast<long>((in[a] - 1) * g.stride[a] + g.kernel[a]) - 2 * static_cast<long>(g.padding[a]);
        if (size < 1) throw std::invalid_argument("transposed conv3d: empty output");
        out[a] = static_cast<std::size_t>(size);
    }
    const std::size_t K = g.kernel[0] * g.kernel[1] * g.kernel[2];
    const std::size_t voxels = x.spatial_size();

    Tensor5 y({x.batch(), g.out_channels, out[0], out[1], out[2]});
    // weights [in][out*K] -> columns = W^T X, then scatter each column entry.
    const Eigen::Map<const RowMatrix> weights(w.data(), static_cast<Eigen::Index>(g.in_channels),
                                              static_cast<Eigen::Index>(g.out_channels * K));
    RowMatrix columns;
    for (std::size_t n = 0; n < x.batch(); ++n) {
        const Eigen::Map<const RowMatrix> input(x.channel(n, 0).data(), static_cast<Eigen::Index>(g.in_channels),
                                                static_cast<Eigen::Index>(voxels));
        columns.noalias() = weights.transpose() * input;
        for (std::size_t co = 0; co < g.out_channels; ++co) {
            auto dst = y.channel(n, co);
            for (std::size_t kd = 0; kd < g.kernel[0]; ++kd)
                for (std::size_t kh = 0; kh < g.kernel[1]; ++kh)
                    for (std::size_t kw = 0; kw < g.kernel[2]; ++kw) {
                        const std::size_t r = ((co * g.kernel[0] + kd) * g.kernel[1] + kh) * g.kernel[2] + kw;
                        const double* src = columns.data() + r * voxels;
                        for (std::size_t id = 0; id < in[0]; ++id) {
                            const long od = static_cast<long>(id * g.stride[0] + kd) - static_cast<long>(g.padding[0]);
                            if (od < 0 || od >= static_cast<long>(out[0])) continue;
                            for (std::size_t ih = 0; ih < in[1]; ++ih) {
                                const long oh = static_cast<long>(ih * g.stride[1] + kh) - static_cast<long>(g.padding[1]);
                                if (oh < 0 || oh >= static_cast<long>(out[1])) continue;
                                double* row = dst.data() + (static_cast<std::size_t>(od) * out[1] + static_cast<std::size_t>(oh)) * out[2];
                                const double* line = src + (id * in[1] + ih) * in[2];
                                for (std::size_t iw = 0; iw < in[2]; ++iw) {
                                    const long ow = static_cast<long>(iw * g.stride[2] + kw) - static_cast<long>(g.padding[2]);
                                    if (ow >= 0 && ow < static_cast<long>(out[2])) row[ow] += line[iw];
                                }
                            }
                        }
                    }
            if (!b.empty()) {
                for (double& v : dst) v += b[co];
            }
        }
    }
    return y;
}

ConvGeom geometry_of(const LayerSpec& layer) {
    return {layer.in_channels, layer.out_channels, layer.kernel, layer.stride, layer.padding};
}

void require_kind(const LayerSpec& layer, LayerKind kind) {
    if (layer.kind != kind)
        throw std::invalid_argument("layer '" + layer.name + "' is " + std::string(layer_kind_name(layer.kind)) +
                                    ", expected " + std::string(layer_kind_name(kind)));
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

std::string_view layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv3d: return "conv3d";
        case LayerKind::TransposedConv3d: return "transposed_conv3d";
        case LayerKind::Downsample: return "downsample";
        case LayerKind::Upsample: return "upsample";
        case LayerKind::Activation: return "activation";
        case LayerKind::Normalization: return "normalization";
        case LayerKind::AddSkip: return "add_skip";
        case LayerKind::ConcatSkip: return "concat_skip";
        case LayerKind::AttentionGate: return "attention_gate";
    }
    return "?";
}

std::size_t expected_weight_count(const LayerSpec& l) {
    switch (l.kind) {
        case LayerKind::Conv3d:
        case LayerKind::TransposedConv3d: return l.out_channels * l.in_channels * l.kernel_volume();
        case LayerKind::Activation: return l.activation == ActivationKind::PReLU ? 1 : 0;
        case LayerKind::AttentionGate:
            return l.inter_channels * l.in_channels * (1 + 27) + l.inter_channels * l.gate_channels + l.inter_channels;
        default: return 0;
    }
}

std::size_t expected_bias_count(const LayerSpec& l) {
    switch (l.kind) {
        case LayerKind::Conv3d:
        case LayerKind::TransposedConv3d: return l.out_channels;
        case LayerKind::AttentionGate: return l.inter_channels + 1;
        default: return 0;
    }
}

void LayerSpec::validate() const {
    for (std::size_t a = 0; a < 3; ++a) {
        if (kernel[a] < 1 || stride[a] < 1) throw std::invalid_argument("layer '" + name + "': kernel and stride must be >= 1");
    }
    if ((kind == LayerKind::Conv3d || kind == LayerKind::TransposedConv3d) && (in_channels == 0 || out_channels == 0))
        throw std::invalid_argument("layer '" + name + "': channel counts must be positive");
    if (kind == LayerKind::AttentionGate && (in_channels == 0 || gate_channels == 0 || inter_channels == 0))
        throw std::invalid_argument("layer '" + name + "': attention gate channel counts must be positive");
    if (weights.size() != expected_weight_count(*this) || bias.size() != expected_bias_count(*this))
        throw std::invalid_argument("layer '" + name + "': parameter arrays have the wrong size");
    const bool needs_source = kind == LayerKind::AddSkip || kind == LayerKind::ConcatSkip || kind == LayerKind::AttentionGate;
    if (needs_source && source.empty()) throw std::invalid_argument("layer '" + name + "': missing skip source");
    if (kind == LayerKind::AttentionGate && save_as.empty())
        throw std::invalid_argument("layer '" + name + "': attention gate must name its output tap");
}

Triple conv_output_size(const Triple& in, const LayerSpec& layer) {
    Triple out{};
    for (std::size_t a = 0; a < 3; ++a) {
        if (in[a] + 2 * layer.padding[a] < layer.kernel[a]) throw std::invalid_argument("conv3d: kernel larger than padded input");
        out[a] = (in[a] + 2 * layer.padding[a] - layer.kernel[a]) / layer.stride[a] + 1;
    }
    return out;
}

Triple transposed_output_size(const Triple& in, const LayerSpec& layer) {
    Triple out{};
    for (std::size_t a = 0; a < 3; ++a) out[a] = (in[a] - 1) * layer.stride[a] + layer.kernel[a] - 2 * layer.padding[a];
    return out;
}

Tensor5 conv3d_forward(const Tensor5& input, const LayerSpec& layer) {
    require_kind(layer, LayerKind::Conv3d);
    layer.validate();
    return conv_core(input, layer.weights, layer.bias, geometry_of(layer));
}

Tensor5 transposed_conv3d_forward(const Tensor5& input, const LayerSpec& layer) {
    require_kind(layer, LayerKind::TransposedConv3d);
    layer.validate();
    return transposed_core(input, layer.weights, layer.bias, geometry_of(layer));
}

Tensor5 max_pool3d(const Tensor5& x, const Triple& size) {
    const Triple in = x.spatial();
    Triple out{};
    for (std::size_t a = 0; a < 3; ++a) {
        out[a] = in[a] / size[a];
        if (out[a] == 0) throw std::invalid_argument("max pool: window larger than input");
    }
    Tensor5 y({x.batch(), x.channels(), out[0], out[1], out[2]});
    for (std::size_t n = 0; n < x.batch(); ++n)
        for (std::size_t c = 0; c < x.channels(); ++c)
            for (std::size_t d = 0; d < out[0]; ++d)
                for (std::size_t h = 0; h < out[1]; ++h)
                    for (std::size_t w = 0; w < out[2]; ++w) {
                        double m = -std::numeric_limits<double>::infinity();
                        for (std::size_t i = 0; i < size[0]; ++i)
                            for (std::size_t j = 0; j < size[1]; ++j)
                                for (std::size_t k = 0; k < size[2]; ++k)
                                    m = std::max(m, x(n, c, d * size[0] + i, h * size[1] + j, w * size[2] + k));
                        y(n, c, d, h, w) = m;
                    }
    return y;
}

Tensor5 upsample_nearest(const Tensor5& x, const Triple& f) {
    const Triple in = x.spatial();
    Tensor5 y({x.batch(), x.channels(), in[0] * f[0], in[1] * f[1], in[2] * f[2]});
    for (std::size_t n = 0; n < x.batch(); ++n)
        for (std::size_t c = 0; c < x.channels(); ++c)
            for (std::size_t d = 0; d < in[0] * f[0]; ++d)
                for (std::size_t h = 0; h < in[1] * f[1]; ++h)
                    for (std::size_t w = 0; w < in[2] * f[2]; ++w) y(n, c, d, h, w) = x(n, c, d / f[0], h / f[1], w / f[2]);
    return y;
}

Tensor5 instance_norm(const Tensor5& x, double epsilon) {
    Tensor5 y = x;
    const auto count = static_cast<double>(x.spatial_size());
    for (std::size_t n = 0; n < x.batch(); ++n)
        for (std::size_t c = 0; c < x.channels(); ++c) {
            auto v = y.channel(n, c);
            double mean = 0.0;
            for (double e : v) mean += e;
            mean /= count;
            double var = 0.0;
            for (double e : v) var += (e - mean) * (e - mean);
            var /= count;
            const double inv = 1.0 / std::sqrt(var + epsilon);
            for (double& e : v) e = (e - mean) * inv;
        }
    return y;
}

Tensor5 activation_forward(const Tensor5& x, ActivationKind kind, double prelu_slope) {
    Tensor5 y = x;
    for (double& v : y.data()) {
        switch (kind) {
            case ActivationKind::ReLU: v = v > 0.0 ? v : 0.0; break;
            case ActivationKind::PReLU: v = v > 0.0 ? v : prelu_slope * v; break;
            case ActivationKind::Sigmoid: v = sigmoid(v); break;
        }
    }
    return y;
}

Tensor5 add_skip(const Tensor5& current, const Tensor5& skip) {
    if (current.batch() != skip.batch() || current.spatial() != skip.spatial())
        throw DimensionMismatch("add_skip: " + shape_str(current.shape()) + " vs " + shape_str(skip.shape()));
    if (current.channels() % skip.channels() != 0)
        throw DimensionMismatch("add_skip: channel counts " + std::to_string(current.channels()) + " and " +
                                std::to_string(skip.channels()) + " cannot be joined");
    Tensor5 y = current;
    for (std::size_t n = 0; n < y.batch(); ++n)
        for (std::size_t c = 0; c < y.channels(); ++c) {
            auto dst = y.channel(n, c);
            const auto src = skip.channel(n, c % skip.channels());
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
        }
    return y;
}

Tensor5 concat_skip(const Tensor5& current, const Tensor5& skip) {
    if (current.batch() != skip.batch() || current.spatial() != skip.spatial())
        throw DimensionMismatch("concat_skip: " + shape_str(current.shape()) + " vs " + shape_str(skip.shape()));
    const Triple s = current.spatial();
    Tensor5 y({current.batch(), skip.channels() + current.channels(), s[0], s[1], s[2]});
    for (std::size_t n = 0; n < y.batch(); ++n) {
        for (std::size_t c = 0; c < skip.channels(); ++c) std::ranges::copy(skip.channel(n, c), y.channel(n, c).begin());
        for (std::size_t c = 0; c < current.channels(); ++c)
            std::ranges::copy(current.channel(n, c), y.channel(n, skip.channels() + c).begin());
    }
    return y;
}

GateOutput attention_gate_forward(const Tensor5& skip, const Tensor5& gating, const LayerSpec& layer) {
    require_kind(layer, LayerKind::AttentionGate);
    layer.validate();
    if (skip.batch() != gating.batch() || skip.spatial() != gating.spatial())
        throw DimensionMismatch("attention gate: skip " + shape_str(skip.shape()) + " vs gating " + shape_str(gating.shape()));
    if (skip.channels() != layer.in_channels || gating.channels() != layer.gate_channels)
        throw DimensionMismatch("attention gate '" + layer.name + "': channel mismatch");

    const std::size_t F = layer.inter_channels, Cx = layer.in_channels, Cg = layer.gate_channels;
    const std::span<const double> w(layer.weights);
    const auto wx1 = w.subspan(0, F * Cx);
    const auto wx3 = w.subspan(F * Cx, F * Cx * 27);
    const auto wg = w.subspan(F * Cx * 28, F * Cg);
    const auto psi = w.subspan(F * Cx * 28 + F * Cg, F);
    const std::span<const double> b(layer.bias);

    const Triple one{1, 1, 1}, three{3, 3, 3}, zero{0, 0, 0};
    Tensor5 hidden = conv_core(skip, wx1, b.subspan(0, F), {Cx, F, one, one, zero});
    const Tensor5 wide = conv_core(skip, wx3, {}, {Cx, F, three, one, one});
    const Tensor5 gate = conv_core(gating, wg, {}, {Cg, F, one, one, zero});
    auto h = hidden.data();
    const auto hw = wide.data();
    const auto hg = gate.data();
    for (std::size_t i = 0; i < h.size(); ++i) h[i] = std::max(0.0, h[i] + hw[i] + hg[i]);

    Tensor5 alpha = conv_core(hidden, psi, b.subspan(F, 1), {F, 1, one, one, zero});
    for (double& v : alpha.data()) v = sigmoid(v);

    Tensor5 gated = skip;
    for (std::size_t n = 0; n < skip.batch(); ++n) {
        const auto a = alpha.channel(n, 0);
        for (std::size_t c = 0; c < skip.channels(); ++c) {
            auto dst = gated.channel(n, c);
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] *= a[i];
        }
    }
    return {std::move(gated), std::move(alpha)};
}

}  // namespace gliomakit::net
