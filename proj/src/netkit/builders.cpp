#include "gliomakit/netkit/builders.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace gliomakit::net {

namespace {

constexpr int kMaxLevels = 7;
constexpr double kPreluInit = 0.25;

std::string lvl(const char* prefix, int level) { return prefix + std::to_string(level); }

void fill_uniform(std::vector<double>& v, std::size_t count, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    v.resize(count);
    for (auto& e : v) e = dist(rng);
}

class GraphBuilder {
public:
    GraphBuilder(std::string arch, std::size_t in_channels, std::size_t num_classes, std::size_t base, int levels,
                 std::uint64_t seed, bool norm, ActivationKind act)
        : seed_(seed), norm_(norm), act_(act) {
        g_.architecture = std::move(arch);
        g_.in_channels = in_channels;
        g_.num_classes = num_classes;
        g_.base_features = base;
        g_.levels = levels;
    }

    void conv(const std::string& name, int level, std::size_t cin, std::size_t cout, std::size_t k,
              std::size_t stride = 1, bool transposed = false) {
        LayerSpec l;
        l.kind = transposed ? LayerKind::TransposedConv3d : LayerKind::Conv3d;
        l.name = name;
        l.level = level;
        l.kernel = {k, k, k};
        l.stride = {stride, stride, stride};
        const std::size_t pad = (transposed || stride > 1) ? 0 : k / 2;
        l.padding = {pad, pad, pad};
        l.in_channels = cin;
        l.out_channels = cout;
        std::mt19937_64 rng(layer_seed(seed_, name));
        const double bound = 1.0 / std::sqrt(static_cast<double>(cin * l.kernel_volume()));
        fill_uniform(l.weights, cout * cin * l.kernel_volume(), bound, rng);
        fill_uniform(l.bias, cout, bound, rng);
        g_.layers.push_back(std::move(l));
    }

    void norm_act(const std::string& prefix, int level) {
        if (norm_) {
            LayerSpec n;
            n.kind = LayerKind::Normalization;
            n.name = prefix + ".norm";
            n.level = level;
            g_.layers.push_back(std::move(n));
        }
        activation(prefix + ".act", level);
    }

    void activation(const std::string& name, int level) {
        LayerSpec a;
        a.kind = LayerKind::Activation;
        a.name = name;
        a.level = level;
        a.activation = act_;
        if (act_ == ActivationKind::PReLU) a.weights = {kPreluInit};
        g_.layers.push_back(std::move(a));
    }

    void pool(const std::string& name, int level) {
        LayerSpec p;
        p.kind = LayerKind::Downsample;
        p.name = name;
        p.level = level;
        p.kernel = {2, 2, 2};
        p.stride = {2, 2, 2};
        g_.layers.push_back(std::move(p));
    }

    void join(const std::string& name, int level, const std::string& source, bool additive) {
        LayerSpec j;
        j.kind = additive ? LayerKind::AddSkip : LayerKind::ConcatSkip;
        j.name = name;
        j.level = level;
        j.source = source;
        g_.layers.push_back(std::move(j));
    }

    void gate(const std::string& name, int level, const std::string& source, std::size_t skip_channels,
              std::size_t gate_channels) {
        LayerSpec l;
        l.kind = LayerKind::AttentionGate;
        l.name = name;
        l.level = level;
        l.source = source;
        l.save_as = source + ".gated";
        l.in_channels = skip_channels;
        l.out_channels = skip_channels;
        l.gate_channels = gate_channels;
        l.inter_channels = std::max<std::size_t>(1, skip_channels / 2);
        const std::size_t F = l.inter_channels;
        std::mt19937_64 rng(layer_seed(seed_, name));
        std::vector<double> part;
        auto append = [&](std::size_t count, double fan_in) {
            fill_uniform(part, count, 1.0 / std::sqrt(fan_in), rng);
            l.weights.insert(l.weights.end(), part.begin(), part.end());
        };
        append(F * skip_channels, static_cast<double>(skip_channels));
        append(F * skip_channels * 27, static_cast<double>(27 * skip_channels));
        append(F * gate_channels, static_cast<double>(gate_channels));
        append(F, static_cast<double>(F));
        fill_uniform(l.bias, F + 1, 1.0 / std::sqrt(static_cast<double>(F)), rng);
        g_.layers.push_back(std::move(l));
    }

    /// Marks the most recent layer's output as a named tap.
    void save(const std::string& tap) { g_.layers.back().save_as = tap; }

    std::size_t size() const { return g_.layers.size(); }

    void skip_edge(const std::string& tap, int level, bool additive, std::size_t join_layer,
                   std::optional<std::size_t> gate_layer = std::nullopt) {
        g_.skips.push_back({tap, level, additive, join_layer, gate_layer});
    }

    NetworkGraph finish() {
        g_.validate();
        return std::move(g_);
    }

private:
    NetworkGraph g_;
    std::uint64_t seed_;
    bool norm_;
    ActivationKind act_;
};

void check_common(std::size_t in_channels, std::size_t num_classes, std::size_t base, int levels) {
    if (in_channels == 0 || num_classes == 0 || base == 0)
        throw std::invalid_argument("channel counts must be positive");
    if (levels < 2 || levels > kMaxLevels)
        throw std::invalid_argument("number of levels must lie in [2, " + std::to_string(kMaxLevels) + "]");
}

std::size_t channels_at(std::size_t base, int level) { return base << level; }

// V-Net residual block: (conv, norm, act) per conv, + residual, act.
void residual_block(GraphBuilder& b, const std::string& prefix, int level, std::size_t cin, std::size_t cout,
                    std::size_t kernel, int convs, const std::string& residual, bool with_residual) {
    for (int i = 0; i < convs; ++i) {
        const std::string name = prefix + ".conv" + std::to_string(i);
        b.conv(name, level, i == 0 ? cin : cout, cout, kernel);
        b.norm_act(name, level);
    }
    if (with_residual) {
        b.join(prefix + ".residual", level, residual, true);
        b.activation(prefix + ".out", level);
    }
}

}  // namespace

std::uint64_t layer_seed(std::uint64_t seed, std::string_view name) {
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char c : name) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h ^ (seed * 0x9E3779B97F4A7C15ULL);
}

NetworkGraph build_unet3d(const UNetOptions& o) {
    check_common(o.in_channels, o.num_classes, o.base_features, o.depth);
    if (o.input_size) {
        const std::size_t div = std::size_t{1} << (o.depth - 1);
        for (auto s : *o.input_size) {
            if (s % div != 0 || s < div)
                throw std::invalid_argument("UNet3D depth " + std::to_string(o.depth) + " needs spatial sizes divisible by " +
                                            std::to_string(div));
        }
    }
    GraphBuilder b("unet3d", o.in_channels, o.num_classes, o.base_features, o.depth, o.seed, o.instance_norm,
                   ActivationKind::ReLU);
    const int bottom = o.depth - 1;
    for (int l = 0; l <= bottom; ++l) {
        const std::size_t cin = l == 0 ? o.in_channels : channels_at(o.base_features, l - 1);
        const std::size_t c = channels_at(o.base_features, l);
        const std::string p = lvl("enc", l);
        if (l > 0) b.pool(p + ".pool", l);
        b.conv(p + ".conv0", l, cin, c, 3);
        b.norm_act(p + ".conv0", l);
        b.conv(p + ".conv1", l, c, c, 3);
        b.norm_act(p + ".conv1", l);
        if (l < bottom) b.save(p);
    }
    for (int l = bottom - 1; l >= 0; --l) {
        const std::size_t c = channels_at(o.base_features, l);
        const std::string p = lvl("dec", l);
        b.conv(p + ".up", l, channels_at(o.base_features, l + 1), c, 2, 2, true);
        b.join(p + ".concat", l, lvl("enc", l), false);
        b.skip_edge(lvl("enc", l), l, false, b.size() - 1);
        b.conv(p + ".conv0", l, 2 * c, c, 3);
        b.norm_act(p + ".conv0", l);
        b.conv(p + ".conv1", l, c, c, 3);
        b.norm_act(p + ".conv1", l);
    }
    b.conv("head", 0, o.base_features, o.num_classes, 1);
    return b.finish();
}

NetworkGraph build_unet3d(std::size_t base_features, std::size_t num_classes, int depth) {
    UNetOptions o;
    o.base_features = base_features;
    o.num_classes = num_classes;
    o.depth = depth;
    return build_unet3d(o);
}

NetworkGraph build_vnet(const VNetOptions& o) {
    check_common(o.in_channels, o.num_classes, o.base_features, o.levels);
    if (o.convs_per_level.size() != static_cast<std::size_t>(o.levels))
        throw std::invalid_argument("V-Net: convs_per_level must list one count per level");
    for (int n : o.convs_per_level) {
        if (n < 1) throw std::invalid_argument("V-Net: every level needs at least one conv");
    }
    if (o.kernel % 2 == 0) throw std::invalid_argument("V-Net: kernel size must be odd");

    GraphBuilder b("vnet", o.in_channels, o.num_classes, o.base_features, o.levels, o.seed, o.instance_norm,
                   ActivationKind::PReLU);
    const int bottom = o.levels - 1;
    for (int l = 0; l <= bottom; ++l) {
        const std::size_t c = channels_at(o.base_features, l);
        const std::string p = lvl("enc", l);
        if (l == 0) {
            residual_block(b, p, 0, o.in_channels, c, o.kernel, o.convs_per_level[0], kInputTap,
                           c % o.in_channels == 0);
        } else {
            const std::string down = lvl("down", l - 1);
            b.conv(down, l, channels_at(o.base_features, l - 1), c, 2, 2);
            b.norm_act(down, l);
            b.save(down);
            residual_block(b, p, l, c, c, o.kernel, o.convs_per_level[static_cast<std::size_t>(l)], down, true);
        }
        if (l < bottom) b.save(p);
    }
    for (int l = bottom - 1; l >= 0; --l) {
        const std::size_t c = channels_at(o.base_features, l);
        const std::string p = lvl("dec", l);
        b.conv(p + ".up", l, channels_at(o.base_features, l + 1), c, 2, 2, true);
        b.norm_act(p + ".up", l);
        b.join(p + ".skip", l, lvl("enc", l), true);
        b.skip_edge(lvl("enc", l), l, true, b.size() - 1);
        b.save(p + ".res");
        residual_block(b, p, l, c, c, o.kernel, o.convs_per_level[static_cast<std::size_t>(l)], p + ".res", true);
    }
    b.conv("head", 0, o.base_features, o.num_classes, 1);
    return b.finish();
}

NetworkGraph build_vnet(std::size_t num_classes) {
    VNetOptions o;
    o.num_classes = num_classes;
    return build_vnet(o);
}

NetworkGraph build_msavnet(const MsaVNetOptions& o) {
    check_common(o.in_channels, o.num_classes, o.base_features, o.levels);
    if (o.levels < 3) throw std::invalid_argument("MSA-VNet needs at least three levels");
    if (o.kernel % 2 == 0) throw std::invalid_argument("MSA-VNet: kernel size must be odd");

    GraphBuilder b("msavnet", o.in_channels, o.num_classes, o.base_features, o.levels, o.seed, o.instance_norm,
                   ActivationKind::PReLU);
    const int bottom = o.levels - 1;
    const std::size_t c0 = o.base_features;
    residual_block(b, "enc0", 0, o.in_channels, c0, o.kernel, 1, kInputTap, c0 % o.in_channels == 0);
    b.save("enc0");
    for (int l = 1; l < bottom; ++l) {
        const std::string p = lvl("enc", l);
        b.pool(p + ".pool", l);
        b.conv(p + ".conv0", l, channels_at(c0, l - 1), channels_at(c0, l), o.kernel);
        b.norm_act(p + ".conv0", l);
        b.save(p);
    }
    // central block
    b.pool("center.pool", bottom);
    b.conv("center.conv0", bottom, channels_at(c0, bottom - 1), channels_at(c0, bottom), 3);
    b.norm_act("center.conv0", bottom);
    b.conv("center.conv1", bottom, channels_at(c0, bottom), channels_at(c0, bottom), 3);
    b.norm_act("center.conv1", bottom);

    for (int l = bottom - 1; l >= 0; --l) {
        const std::size_t c = channels_at(c0, l);
        const std::string p = lvl("dec", l);
        const std::string tap = lvl("enc", l);
        b.conv(p + ".up", l, channels_at(c0, l + 1), c, 2, 2, true);
        b.norm_act(p + ".up", l);
        std::optional<std::size_t> gate_index;
        std::string source = tap;
        if (o.attention) {
            b.gate(p + ".attention", l, tap, c, c);
            gate_index = b.size() - 1;
            source = tap + ".gated";
        }
        b.join(p + ".skip", l, source, true);
        b.skip_edge(tap, l, true, b.size() - 1, gate_index);
        b.conv(p + ".conv0", l, c, c, o.kernel);
        b.norm_act(p + ".conv0", l);
    }
    b.conv("head", 0, c0, o.num_classes, 1);
    return b.finish();
}

NetworkGraph build_msavnet(std::size_t num_classes) {
    MsaVNetOptions o;
    o.num_classes = num_classes;
    return build_msavnet(o);
}

void open_attention_gates(NetworkGraph& net) {
    for (auto& l : net.layers) {
        if (l.kind != LayerKind::AttentionGate) continue;
        const std::size_t F = l.inter_channels;
        std::fill(l.weights.end() - static_cast<std::ptrdiff_t>(F), l.weights.end(), 0.0);
        l.bias.back() = 1000.0;  // sigmoid(1000) == 1.0 in double
    }
}

}  // namespace gliomakit::net
