#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gliomakit/netkit/layers.hpp"

namespace gliomakit::net {

/// Encoder-to-decoder connection. Residual connections inside a block are
/// plain AddSkip layers and are not listed here.
struct SkipEdge {
    std::string tap;           // encoder output name
    int level = 0;             // resolution level of both ends
    bool additive = true;      // false: channel concatenation
    std::size_t join_layer = 0;
    /// Index of the attention gate on this edge, if any.
    std::optional<std::size_t> gate_layer;
};

/// Ordered layer list interpreted front to back. The network input is
/// available under the tap name "input".
struct NetworkGraph {
    std::string architecture;
    std::size_t in_channels = 4;
    std::size_t num_classes = 4;
    std::size_t base_features = 32;
    int levels = 1;  // number of resolution levels
    std::vector<LayerSpec> layers;
    std::vector<SkipEdge> skips;

    /// Input spatial dims must be divisible by this.
    std::size_t required_divisor() const { return std::size_t{1} << (levels - 1); }

    /// Structural checks: sources defined before use, skip ends on the same
    /// level, every skip joins at its recorded layer, head emits num_classes.
    void validate() const;
};

inline constexpr const char* kInputTap = "input";

struct LayerTrace {
    std::string name;
    LayerKind kind;
    Shape5 output_shape;
    std::size_t params;
};

struct ForwardTrace {
    std::vector<LayerTrace> layers;
    /// Attention coefficients per gate, in layer order.
    std::vector<Tensor5> gate_maps;
};

/// Output (batch, num_classes, D, H, W). Throws DimensionMismatch for a
/// channel mismatch, std::invalid_argument for indivisible spatial dims.
Tensor5 forward(const NetworkGraph& net, const Tensor5& input, ForwardTrace* trace = nullptr);

/// Weight plus bias elements over all layers.
std::size_t param_count(const NetworkGraph& net);

/// Plain-text table of layers, output shapes and parameter counts.
std::string summary_table(const NetworkGraph& net, const ForwardTrace& trace);

}  // namespace gliomakit::net
