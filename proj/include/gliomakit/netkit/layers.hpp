#pragma once

// Layer descriptions and the forward primitives they map to.
//
// "Convolution" is cross-correlation (no kernel flip), as in every deep
// learning framework. Weight layouts follow the usual conventions:
//   conv3d            [out][in][kd][kh][kw]
//   transposed_conv3d [in][out][kd][kh][kw]
// so a conv3d weight array reinterpreted as transposed-conv weights gives the
// adjoint operator.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gliomakit/netkit/tensor.hpp"

namespace gliomakit::net {

enum class LayerKind {
    Conv3d,
    TransposedConv3d,
    Downsample,     // max pooling, kernel == stride
    Upsample,       // nearest neighbour, factor == stride
    Activation,
    Normalization,  // instance normalisation, no affine parameters
    AddSkip,
    ConcatSkip,
    AttentionGate,
};

std::string_view layer_kind_name(LayerKind kind);

enum class ActivationKind { ReLU, PReLU, Sigmoid };

struct LayerSpec {
    LayerKind kind = LayerKind::Conv3d;
    std::string name;
    /// Resolution level: 0 is full resolution, each downsampling adds one.
    int level = 0;

    Triple kernel{1, 1, 1};
    Triple stride{1, 1, 1};
    Triple padding{0, 0, 0};
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::vector<double> weights;
    std::vector<double> bias;

    ActivationKind activation = ActivationKind::ReLU;  // PReLU keeps its slope in weights[0]
    double norm_epsilon = 1e-5;

    /// Attention gates: channels of the gating signal and of the hidden layer.
    std::size_t gate_channels = 0;
    std::size_t inter_channels = 0;

    /// Tap read by AddSkip / ConcatSkip / AttentionGate.
    std::string source;
    /// Store this layer's output under a tap name (for AttentionGate: the gated skip).
    std::string save_as;

    std::size_t kernel_volume() const { return kernel[0] * kernel[1] * kernel[2]; }
    std::size_t param_count() const { return weights.size() + bias.size(); }

    /// Checks kernel/stride >= 1 and parameter array sizes for the kind.
    void validate() const;
};

/// Expected weight/bias lengths for a layer with the given shape fields.
std::size_t expected_weight_count(const LayerSpec& layer);
std::size_t expected_bias_count(const LayerSpec& layer);

/// floor((in + 2 pad - kernel) / stride) + 1 per axis.
Triple conv_output_size(const Triple& in, const LayerSpec& layer);
/// (in - 1) stride - 2 pad + kernel per axis.
Triple transposed_output_size(const Triple& in, const LayerSpec& layer);

Tensor5 conv3d_forward(const Tensor5& input, const LayerSpec& layer);
Tensor5 transposed_conv3d_forward(const Tensor5& input, const LayerSpec& layer);
Tensor5 max_pool3d(const Tensor5& input, const Triple& size);
Tensor5 upsample_nearest(const Tensor5& input, const Triple& factor);
Tensor5 instance_norm(const Tensor5& input, double epsilon);
Tensor5 activation_forward(const Tensor5& input, ActivationKind kind, double prelu_slope = 0.25);

/// current + skip. A skip with fewer channels is tiled when they divide evenly.
Tensor5 add_skip(const Tensor5& current, const Tensor5& skip);
/// Channel concatenation [skip, current].
Tensor5 concat_skip(const Tensor5& current, const Tensor5& skip);

struct GateOutput {
    Tensor5 gated;  // skip * alpha
    Tensor5 alpha;  // (batch, 1, D, H, W), every value in [0, 1]
};

/// Two-scale additive attention gate:
///   hidden = relu(Wx1 * skip + Wx3 (*) skip + Wg * gating + b)
///   alpha  = sigmoid(psi * hidden + b_psi)
/// where * is a 1x1x1 and (*) a 3x3x3 (padded) convolution.
/// Weights are packed [Wx1 | Wx3 | Wg | psi], biases [b | b_psi].
GateOutput attention_gate_forward(const Tensor5& skip, const Tensor5& gating, const LayerSpec& layer);

}  // namespace gliomakit::net
