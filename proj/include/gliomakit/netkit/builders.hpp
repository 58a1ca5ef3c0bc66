#pragma once

// Forward graphs for the three ensemble members at desk scale.
//
// Parameters are drawn per layer from mt19937_64 seeded with
// hash(layer name) ^ seed, uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]; two
// graphs built with the same seed share the weights of same-named layers.

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "gliomakit/netkit/graph.hpp"

namespace gliomakit::net {

struct UNetOptions {
    std::size_t in_channels = 4;
    std::size_t num_classes = 4;
    std::size_t base_features = 32;
    int depth = 4;  // resolution levels
    bool instance_norm = true;
    std::uint64_t seed = 0;
    /// When set, the builder rejects a depth this input cannot support.
    std::optional<Triple> input_size;
};

/// Concatenative skips, 3x3x3 kernels, ReLU, channel doubling per level,
/// max-pool down, transposed-conv up, 1x1x1 head.
NetworkGraph build_unet3d(const UNetOptions& options);
NetworkGraph build_unet3d(std::size_t base_features, std::size_t num_classes, int depth);

struct VNetOptions {
    std::size_t in_channels = 4;
    std::size_t num_classes = 4;
    std::size_t base_features = 32;
    int levels = 3;
    /// Convolutions per residual block, encoder level order (mirrored in the decoder).
    std::vector<int> convs_per_level{1, 1, 1};
    std::size_t kernel = 5;
    bool instance_norm = true;
    std::uint64_t seed = 0;
};

/// Residual blocks of kernel^3 convs with PReLU, additive encoder-decoder
/// skips, 2x2x2 strided-conv down and transposed-conv up. The first block's
/// residual is the input tiled across channels.
NetworkGraph build_vnet(const VNetOptions& options);
NetworkGraph build_vnet(std::size_t num_classes);

struct MsaVNetOptions {
    std::size_t in_channels = 4;
    std::size_t num_classes = 4;
    std::size_t base_features = 32;
    int levels = 3;
    std::size_t kernel = 5;
    bool attention = true;
    bool instance_norm = true;
    std::uint64_t seed = 0;
};

/// V-Net-style encoder with max pooling, a central block of two 3x3x3 convs,
/// transposed-conv decoder, and an attention gate on every skip edge.
NetworkGraph build_msavnet(const MsaVNetOptions& options);
NetworkGraph build_msavnet(std::size_t num_classes);

/// Sets every gate's output projection to zero weight and a large bias so
/// the coefficients are exactly 1 and the gates pass skips through unchanged.
void open_attention_gates(NetworkGraph& net);

std::uint64_t layer_seed(std::uint64_t seed, std::string_view name);

}  // namespace gliomakit::net
