#include <doctest.h>

#include <cmath>
#include <algorithm>
#include <random>

#include <stdexcept>

#include "gliomakit/error.hpp"
#include "gliomakit/netkit.hpp"
#include "oracles/conv_oracle.hpp"

using namespace gliomakit::net;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

LayerSpec conv_layer(std::size_t cin, std::size_t cout, std::size_t k, std::size_t stride, std::size_t pad,
                     std::uint64_t seed, bool transposed = false) {
    LayerSpec l;
    l.kind = transposed ? LayerKind::TransposedConv3d : LayerKind::Conv3d;
    l.name = "test";
    l.kernel = {k, k, k};
    l.stride = {stride, stride, stride};
    l.padding = {pad, pad, pad};
    l.in_channels = cin;
    l.out_channels = cout;
    l.weights = random_vec(cin * cout * k * k * k, seed);
    l.bias = random_vec(cout, seed + 1);
    return l;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    REQUIRE(a.size() == b.size());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

std::size_t count_kind(const NetworkGraph& g, LayerKind k) {
    return static_cast<std::size_t>(
        std::count_if(g.layers.begin(), g.layers.end(), [&](const LayerSpec& l) { return l.kind == k; }));
}

const LayerSpec& layer_named(const NetworkGraph& g, const std::string& name) {
    for (const auto& l : g.layers)
        if (l.name == name) return l;
    FAIL("no layer " << name);
    throw std::logic_error("unreachable");
}

}  // namespace

TEST_SUITE("netkit") {

TEST_CASE("1x1x1 weight 2 doubles the input") {
    LayerSpec l = conv_layer(1, 1, 1, 1, 0, 0);
    l.weights = {2.0};
    l.bias = {0.0};
    const Tensor5 x = Tensor5::random_uniform({1, 1, 3, 4, 5}, 1);
    const Tensor5 y = conv3d_forward(x, l);
    REQUIRE(y.shape() == x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.data()[i] == 2.0 * x.data()[i]);
}

TEST_CASE("centred Dirac kernel with padding is the identity") {
    LayerSpec l = conv_layer(2, 2, 3, 1, 1, 0);
    std::fill(l.weights.begin(), l.weights.end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
    for (std::size_t c = 0; c < 2; ++c) l.weights[(c * 2 + c) * 27 + 13] = 1.0;
    const Tensor5 x = Tensor5::random_uniform({1, 2, 4, 5, 6}, 2);
    CHECK(conv3d_forward(x, l) == x);
}

TEST_CASE("conv3d matches the direct-loop oracle") {
    struct Case { std::size_t n, cin, cout, k, stride, pad; std::array<std::size_t, 3> in; };
    const Case cases[] = {
        {1, 2, 4, 3, 1, 0, {5, 5, 5}}, {1, 2, 4, 3, 1, 1, {5, 5, 5}}, {2, 3, 2, 2, 2, 0, {6, 4, 8}},
        {1, 1, 3, 5, 1, 2, {6, 7, 5}}, {1, 4, 5, 3, 2, 1, {7, 6, 5}}, {1, 3, 3, 1, 1, 0, {3, 3, 3}},
    };
    std::uint64_t seed = 10;
    for (const auto& c : cases) {
        const LayerSpec l = conv_layer(c.cin, c.cout, c.k, c.stride, c.pad, seed++);
        const Tensor5 x = Tensor5::random_uniform({c.n, c.cin, c.in[0], c.in[1], c.in[2]}, seed++);
        const Tensor5 y = conv3d_forward(x, l);
        const oracle::ConvShape s{c.n, c.cin, c.cout, c.in, l.kernel, l.stride, l.padding};
        const auto o = oracle::conv_out(s);
        CHECK(y.shape() == Shape5{c.n, c.cout, o[0], o[1], o[2]});
        const auto ref = oracle::conv3d({x.data().begin(), x.data().end()}, l.weights, l.bias, s);
        CHECK(max_abs_diff(y.data(), ref) < 1e-6);
    }
}

TEST_CASE("transposed conv3d: shapes and the scatter oracle") {
    LayerSpec up = conv_layer(3, 2, 2, 2, 0, 5, true);
    const Tensor5 x = Tensor5::random_uniform({1, 3, 4, 3, 2}, 6);
    const Tensor5 y = transposed_conv3d_forward(x, up);
    CHECK(y.shape() == Shape5{1, 2, 8, 6, 4});
    const oracle::ConvShape s{1, 3, 2, {4, 3, 2}, up.kernel, up.stride, up.padding};
    CHECK(max_abs_diff(y.data(), oracle::transposed_conv3d({x.data().begin(), x.data().end()}, up.weights, up.bias,
                                                           s)) < 1e-6);

    LayerSpec odd = conv_layer(2, 3, 3, 2, 1, 7, true);
    const Tensor5 x2 = Tensor5::random_uniform({2, 2, 3, 4, 3}, 8);
    const oracle::ConvShape s2{2, 2, 3, {3, 4, 3}, odd.kernel, odd.stride, odd.padding};
    CHECK(max_abs_diff(transposed_conv3d_forward(x2, odd).data(),
                       oracle::transposed_conv3d({x2.data().begin(), x2.data().end()}, odd.weights, odd.bias, s2)) <
          1e-6);

    LayerSpec mix = conv_layer(3, 2, 1, 1, 0, 9, true);
    std::fill(mix.bias.begin(), mix.bias.end(), 0.0);
    const Tensor5 y3 = transposed_conv3d_forward(x, mix);
    CHECK(y3.spatial() == x.spatial());
}

TEST_CASE("transposed conv is the adjoint of conv") {
    struct Case { std::size_t cin, cout, k, stride, pad; std::array<std::size_t, 3> in; };
    const Case cases[] = {{2, 3, 3, 1, 1, {5, 5, 5}}, {3, 2, 2, 2, 0, {6, 4, 8}}, {2, 2, 3, 2, 1, {7, 5, 9}},
                          {1, 4, 5, 1, 2, {6, 6, 6}}};
    std::uint64_t seed = 100;
    for (const auto& c : cases) {
        LayerSpec fwd = conv_layer(c.cin, c.cout, c.k, c.stride, c.pad, seed++);
        std::fill(fwd.bias.begin(), fwd.bias.end(), 0.0);
        LayerSpec adj = fwd;
        adj.kind = LayerKind::TransposedConv3d;
        adj.in_channels = c.cout;
        adj.out_channels = c.cin;
        adj.bias.assign(c.cin, 0.0);
        const Tensor5 x = Tensor5::random_uniform({1, c.cin, c.in[0], c.in[1], c.in[2]}, seed++);
        const Tensor5 ax = conv3d_forward(x, fwd);
        const Tensor5 y = Tensor5::random_uniform(ax.shape(), seed++);
        const Tensor5 aty = transposed_conv3d_forward(y, adj);
        REQUIRE(aty.shape() == x.shape());
        const double lhs = inner_product(ax, y), rhs = inner_product(x, aty);
        CHECK(std::abs(lhs - rhs) < 1e-6 * std::max(1.0, std::abs(lhs)));
    }
}

TEST_CASE("pooling, upsampling, normalisation, activations") {
    const Tensor5 x = Tensor5::random_uniform({1, 2, 4, 4, 4}, 3);
    const Tensor5 p = max_pool3d(x, {2, 2, 2});
    CHECK(p.shape() == Shape5{1, 2, 2, 2, 2});
    double m = -1e9;
    for (std::size_t d = 0; d < 2; ++d)
        for (std::size_t h = 0; h < 2; ++h)
            for (std::size_t w = 0; w < 2; ++w) m = std::max(m, x(0, 1, 2 + d, h, 2 + w));
    CHECK(p(0, 1, 1, 0, 1) == m);

    const Tensor5 u = upsample_nearest(p, {2, 2, 2});
    CHECK(u.shape() == x.shape());
    CHECK(u(0, 1, 3, 1, 2) == p(0, 1, 1, 0, 1));

    const Tensor5 n = instance_norm(x, 1e-5);
    for (std::size_t c = 0; c < 2; ++c) {
        double s = 0.0, ss = 0.0;
        for (double v : n.channel(0, c)) s += v;
        const double mean = s / 64.0;
        for (double v : n.channel(0, c)) ss += (v - mean) * (v - mean);
        CHECK(std::abs(mean) < 1e-12);
        CHECK(std::sqrt(ss / 64.0) == doctest::Approx(1.0).epsilon(1e-3));
    }

    const Tensor5 r = activation_forward(x, ActivationKind::ReLU);
    const Tensor5 pr = activation_forward(x, ActivationKind::PReLU, 0.25);
    const Tensor5 sg = activation_forward(x, ActivationKind::Sigmoid);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x.data()[i];
        CHECK(r.data()[i] == std::max(v, 0.0));
        CHECK(pr.data()[i] == (v > 0 ? v : 0.25 * v));
        CHECK(sg.data()[i] == doctest::Approx(1.0 / (1.0 + std::exp(-v))));
    }
}

TEST_CASE("skip joins") {
    const Tensor5 a = Tensor5::random_uniform({1, 4, 2, 2, 2}, 1);
    const Tensor5 b = Tensor5::random_uniform({1, 4, 2, 2, 2}, 2);
    const Tensor5 s = add_skip(a, b);
    CHECK(s.shape() == a.shape());
    CHECK(s(0, 3, 1, 1, 1) == a(0, 3, 1, 1, 1) + b(0, 3, 1, 1, 1));
    const Tensor5 one = Tensor5::random_uniform({1, 2, 2, 2, 2}, 3);
    CHECK(add_skip(a, one)(0, 3, 0, 1, 0) == a(0, 3, 0, 1, 0) + one(0, 1, 0, 1, 0));
    CHECK_THROWS(add_skip(a, Tensor5::random_uniform({1, 3, 2, 2, 2}, 4)));
    const Tensor5 c = concat_skip(a, one);
    CHECK(c.shape() == Shape5{1, 6, 2, 2, 2});
    CHECK(c(0, 0, 1, 0, 1) == one(0, 0, 1, 0, 1));
    CHECK(c(0, 2, 1, 0, 1) == a(0, 0, 1, 0, 1));
    CHECK_THROWS_AS(concat_skip(a, Tensor5::random_uniform({1, 2, 2, 2, 4}, 5)), gliomakit::DimensionMismatch);
}

TEST_CASE("parameter counts") {
    LayerSpec l = conv_layer(1, 8, 3, 1, 1, 0);
    CHECK(l.param_count() == 8 * 27 + 8);
    CHECK(param_count(NetworkGraph{}) == 0);
    const std::size_t unet = param_count(build_unet3d(32, 4, 4));
    const std::size_t vnet = param_count(build_vnet(4));
    MESSAGE("UNet3D params " << unet << ", V-Net params " << vnet);
    CHECK(unet > vnet);
}

TEST_CASE("V-Net structure") {
    const NetworkGraph g = build_vnet(4);
    CHECK_NOTHROW(g.validate());
    const LayerSpec& first = layer_named(g, "enc0.conv0");
    CHECK(first.out_channels == 32);
    for (const auto& l : g.layers) {
        if (l.kind == LayerKind::Conv3d && l.name.find(".conv") != std::string::npos)
            CHECK(l.kernel == Triple{5, 5, 5});
        if (l.kind == LayerKind::Activation && l.name.rfind("head", 0) != 0)
            CHECK(l.activation == ActivationKind::PReLU);
    }
    CHECK(g.skips.size() == 2);
    for (const auto& s : g.skips) CHECK(s.additive);

    ForwardTrace trace;
    forward(g, Tensor5::random_uniform({1, 4, 16, 16, 16}, 1), &trace);
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        if (g.layers[i].kind != LayerKind::AddSkip) continue;
        // Additive joins keep the channel count.
        CHECK(trace.layers[i].output_shape[1] == trace.layers[i - 1].output_shape[1]);
    }
}

TEST_CASE("MSA-VNet gates") {
    NetworkGraph g = build_msavnet(4);
    CHECK_NOTHROW(g.validate());
    CHECK(count_kind(g, LayerKind::AttentionGate) == g.skips.size());
    for (const auto& s : g.skips) {
        REQUIRE(s.gate_layer.has_value());
        CHECK(g.layers[*s.gate_layer].kind == LayerKind::AttentionGate);
    }

    const Tensor5 x = Tensor5::random_uniform({1, 4, 16, 16, 16}, 2);
    ForwardTrace trace;
    forward(g, x, &trace);
    CHECK(trace.gate_maps.size() == g.skips.size());
    for (const auto& alpha : trace.gate_maps) {
        CHECK(alpha.channels() == 1);
        for (double a : alpha.data()) CHECK((a >= 0.0 && a <= 1.0));
    }

    MsaVNetOptions plain;
    plain.attention = false;
    const NetworkGraph no_gate = build_msavnet(plain);
    CHECK(count_kind(no_gate, LayerKind::AttentionGate) == 0);
    open_attention_gates(g);
    ForwardTrace open_trace;
    const Tensor5 gated = forward(g, x, &open_trace);
    for (const auto& alpha : open_trace.gate_maps)
        for (double a : alpha.data()) CHECK(a == 1.0);
    CHECK(gated == forward(no_gate, x));
}

TEST_CASE("all three builders on 32^3 inputs") {
    const Tensor5 x = Tensor5::random_uniform({1, 4, 32, 32, 32}, 7);
    for (const NetworkGraph& g : {build_unet3d(32, 4, 4), build_vnet(4), build_msavnet(4)}) {
        CAPTURE(g.architecture);
        const Tensor5 y = forward(g, x);
        CHECK(y.shape() == Shape5{1, 4, 32, 32, 32});
        CHECK(y.all_finite());
    }
}

TEST_CASE("determinism and batch independence") {
    const NetworkGraph a = build_vnet(VNetOptions{});
    const NetworkGraph b = build_vnet(VNetOptions{});
    const Tensor5 x = Tensor5::random_uniform({1, 4, 8, 8, 8}, 3);
    const Tensor5 ya = forward(a, x);
    CHECK(ya == forward(b, x));

    std::vector<double> twice(x.data().begin(), x.data().end());
    twice.insert(twice.end(), x.data().begin(), x.data().end());
    const Tensor5 y2 = forward(a, Tensor5({2, 4, 8, 8, 8}, twice));
    REQUIRE(y2.batch() == 2);
    for (std::size_t c = 0; c < y2.channels(); ++c) {
        const auto s0 = y2.channel(0, c), s1 = y2.channel(1, c);
        CHECK(std::equal(s0.begin(), s0.end(), s1.begin()));
        const auto ref = ya.channel(0, c);
        CHECK(std::equal(s0.begin(), s0.end(), ref.begin()));
    }
    VNetOptions other;
    other.seed = 1;
    CHECK_FALSE(forward(build_vnet(other), x) == ya);
}

TEST_CASE("forward rejects bad inputs") {
    const NetworkGraph g = build_vnet(4);
    CHECK_THROWS_AS(forward(g, Tensor5::random_uniform({1, 3, 8, 8, 8}, 1)), gliomakit::DimensionMismatch);
    CHECK_THROWS_AS(forward(g, Tensor5::random_uniform({1, 4, 8, 8, 6}, 1)), std::invalid_argument);
    UNetOptions deep;
    deep.depth = 5;
    deep.input_size = Triple{8, 8, 8};
    CHECK_THROWS_AS(build_unet3d(deep), std::invalid_argument);
}

TEST_CASE("soft Dice loss closed forms") {
    const Tensor5 p({1, 1, 1, 1, 2}, std::vector<double>{0.5, 0.5});
    const Tensor5 g({1, 1, 1, 1, 2}, std::vector<double>{1.0, 0.0});
    CHECK(soft_dice_loss(p, g, 0.0) == doctest::Approx(0.5).epsilon(1e-15));

    std::mt19937_64 rng(5);
    std::vector<double> onehot(2 * 2 * 27, 0.0);
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t v = 0; v < 27; ++v) onehot[(n * 2 + rng() % 2) * 27 + v] = 1.0;
    const Tensor5 t({2, 2, 3, 3, 3}, onehot);
    CHECK(soft_dice_loss(t, t) < 1e-6);

    const Tensor5 zero({2, 2, 3, 3, 3}, 0.0);
    CHECK(soft_dice_loss(zero, t, 1e-12) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_THROWS(soft_dice_loss(Tensor5({1, 1, 1, 1, 2}, std::vector<double>{1.5, 0.0}), g));
    CHECK_THROWS(soft_dice_loss(p, Tensor5({1, 1, 1, 2, 1}, 0.0)));
}

TEST_CASE("soft Dice gradient matches central differences") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Shape5 shape{1, 2, 4, 4, 4};
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(0.05, 0.95);
        std::vector<double> pv(2 * 64), gv(2 * 64, 0.0);
        for (auto& x : pv) x = u(rng);
        for (std::size_t v = 0; v < 64; ++v) gv[(rng() % 2) * 64 + v] = 1.0;
        const Tensor5 pred(shape, pv), target(shape, gv);
        const Tensor5 grad = soft_dice_grad(pred, target);
        CHECK(grad.shape() == pred.shape());
        const double h = 1e-4;
        double worst = 0.0;
        for (std::size_t i = 0; i < pv.size(); ++i) {
            auto up = pv, dn = pv;
            up[i] += h;
            dn[i] -= h;
            const double fd = (soft_dice_loss(Tensor5(shape, up), target) - soft_dice_loss(Tensor5(shape, dn), target)) /
                              (2.0 * h);
            const double g = grad.data()[i];
            worst = std::max(worst, std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-12}));
        }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("soft Dice gradient at pred == target") {
    // Perturbations leave [0, 1] here, so differentiate a local transcription.
    const double eps = 1e-5;
    auto loss = [&](const std::vector<double>& p, const std::vector<double>& g, std::size_t slices, std::size_t n) {
        double total = 0.0;
        for (std::size_t s = 0; s < slices; ++s) {
            double I = 0.0, S = 0.0;
            for (std::size_t v = 0; v < n; ++v) {
                I += p[s * n + v] * g[s * n + v];
                S += p[s * n + v] + g[s * n + v];
            }
            total += 1.0 - (2.0 * I + eps) / (S + eps);
        }
        return total / double(slices);
    };
    std::vector<double> g(2 * 8, 0.0);
    for (std::size_t v = 0; v < 8; ++v) g[(v % 3 == 0 ? 0 : 1) * 8 + v] = 1.0;
    const Tensor5 t({1, 2, 2, 2, 2}, g);
    const Tensor5 grad = soft_dice_grad(t, t, eps);
    const double h = 1e-6;
    for (std::size_t i = 0; i < g.size(); ++i) {
        auto up = g, dn = g;
        up[i] += h;
        dn[i] -= h;
        const double fd = (loss(up, g, 2, 8) - loss(dn, g, 2, 8)) / (2.0 * h);
        CHECK(std::abs(grad.data()[i] - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("cosine schedule") {
    const TrainingSchedule s;
    CHECK(cosine_lr(0, 100, s) == 6e-5);
    CHECK(cosine_lr(100, 100, s) == 0.0);
    CHECK(cosine_lr(50, 100, s) == doctest::Approx(3e-5).epsilon(1e-12));
    double prev = 1.0;
    for (std::size_t t = 0; t <= 100; ++t) {
        const double lr = cosine_lr(t, 100, s);
        CHECK(lr <= prev);
        prev = lr;
    }
    TrainingSchedule floor = s;
    floor.eta_min = 1e-6;
    CHECK(cosine_lr(100, 100, floor) == 1e-6);
    CHECK_THROWS_AS(cosine_lr(101, 100, s), std::out_of_range);
}

}  // TEST_SUITE
