#include "gliomakit/netkit/graph.hpp"

#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

#include "gliomakit/error.hpp"

namespace gliomakit::net {

void NetworkGraph::validate() const {
    if (layers.empty()) return;
    if (levels < 1) throw std::invalid_argument(architecture + ": levels must be >= 1");

    std::map<std::string, int> tap_level{{kInputTap, 0}};
    for (const auto& l : layers) {
        l.validate();
        if (!l.source.empty()) {
            const auto it = tap_level.find(l.source);
            if (it == tap_level.end())
                throw std::invalid_argument(architecture + ": layer '" + l.name + "' reads tap '" + l.source +
                                            "' before it is produced");
            if (it->second != l.level)
                throw std::invalid_argument(architecture + ": layer '" + l.name + "' joins level " +
                                            std::to_string(it->second) + " features at level " + std::to_string(l.level));
        }
        if (!l.save_as.empty()) tap_level[l.save_as] = l.level;
    }
    for (const auto& s : skips) {
        if (s.join_layer >= layers.size()) throw std::invalid_argument(architecture + ": skip joins past the last layer");
        const auto& join = layers[s.join_layer];
        const LayerKind expected = s.additive ? LayerKind::AddSkip : LayerKind::ConcatSkip;
        if (join.kind != expected || join.level != s.level)
            throw std::invalid_argument(architecture + ": skip '" + s.tap + "' has an inconsistent join layer");
        if (s.gate_layer) {
            const auto& gate = layers.at(*s.gate_layer);
            if (gate.kind != LayerKind::AttentionGate || gate.source != s.tap || join.source != gate.save_as)
                throw std::invalid_argument(architecture + ": skip '" + s.tap + "' has an inconsistent gate");
        } else if (join.source != s.tap) {
            throw std::invalid_argument(architecture + ": skip '" + s.tap + "' joins the wrong tap");
        }
    }
    const auto& head = layers.back();
    if (head.kind != LayerKind::Conv3d || head.out_channels != num_classes)
        throw std::invalid_argument(architecture + ": final layer must be a conv producing num_classes channels");
}

Tensor5 forward(const NetworkGraph& net, const Tensor5& input, ForwardTrace* trace) {
    if (input.channels() != net.in_channels)
        throw DimensionMismatch(net.architecture + ": input has " + std::to_string(input.channels()) +
                                " channels, network expects " + std::to_string(net.in_channels));
    const std::size_t div = net.required_divisor();
    for (auto s : input.spatial()) {
        if (s % div != 0)
            throw std::invalid_argument(net.architecture + ": spatial size " + std::to_string(s) +
                                        " is not divisible by " + std::to_string(div));
    }

    std::map<std::string, Tensor5> taps;
    taps.emplace(kInputTap, input);
    Tensor5 x = input;
    for (const auto& l : net.layers) {
        switch (l.kind) {
            case LayerKind::Conv3d: x = conv3d_forward(x, l); break;
            case LayerKind::TransposedConv3d: x = transposed_conv3d_forward(x, l); break;
            case LayerKind::Downsample: x = max_pool3d(x, l.stride); break;
            case LayerKind::Upsample: x = upsample_nearest(x, l.stride); break;
            case LayerKind::Activation:
                x = activation_forward(x, l.activation, l.weights.empty() ? 0.25 : l.weights[0]);
                break;
            case LayerKind::Normalization: x = instance_norm(x, l.norm_epsilon); break;
            case LayerKind::AddSkip: x = add_skip(x, taps.at(l.source)); break;
            case LayerKind::ConcatSkip: x = concat_skip(x, taps.at(l.source)); break;
            case LayerKind::AttentionGate: {
                GateOutput g = attention_gate_forward(taps.at(l.source), x, l);
                if (trace) {
                    trace->gate_maps.push_back(g.alpha);
                    trace->layers.push_back({l.name, l.kind, g.gated.shape(), l.param_count()});
                }
                taps.insert_or_assign(l.save_as, std::move(g.gated));
                continue;
            }
        }
        if (!l.save_as.empty()) taps.insert_or_assign(l.save_as, x);
        if (trace) trace->layers.push_back({l.name, l.kind, x.shape(), l.param_count()});
    }
    return x;
}

std::size_t param_count(const NetworkGraph& net) {
    std::size_t total = 0;
    for (const auto& l : net.layers) total += l.param_count();
    return total;
}

std::string summary_table(const NetworkGraph& net, const ForwardTrace& trace) {
    std::ostringstream os;
    os << std::left << std::setw(28) << "layer" << std::setw(20) << "kind" << std::setw(22) << "output"
       << std::right << std::setw(12) << "params" << '\n';
    os << std::string(82, '-') << '\n';
    for (const auto& t : trace.layers) {
        os << std::left << std::setw(28) << t.name << std::setw(20) << layer_kind_name(t.kind) << std::setw(22)
           << shape_str(t.output_shape) << std::right << std::setw(12) << t.params << '\n';
    }
    os << std::string(82, '-') << '\n';
    os << "architecture: " << net.architecture << "  levels: " << net.levels << "  skips: " << net.skips.size();
    std::size_t gates = 0;
    for (const auto& s : net.skips) gates += s.gate_layer ? 1 : 0;
    os << "  attention gates: " << gates << "  total params: " << param_count(net) << '\n';
    return os.str();
}

}  // namespace gliomakit::net
