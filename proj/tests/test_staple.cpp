#include <doctest.h>

#include <random>

#include "gliomakit/staple.hpp"
#include "oracles/staple_oracle.hpp"
#include "support/test_util.hpp"

using namespace gliomakit;

namespace {

RaterDecisions make_decisions(const std::vector<std::vector<std::uint8_t>>& raters, Dims dims) {
    std::vector<std::uint8_t> flat;
    for (const auto& r : raters) flat.insert(flat.end(), r.begin(), r.end());
    return RaterDecisions(Region::WT, Grid::with_dims(dims), raters.size(), flat);
}

}  // namespace

TEST_SUITE("staple") {

TEST_CASE("identical raters reproduce the consensus") {
    const std::vector<std::uint8_t> m{1, 1, 0, 0, 1, 0, 1, 0};
    const auto d = make_decisions({m, m, m}, {2, 2, 2});
    const StapleResult r = staple_binary(d, StapleConfig{});
    CHECK(testutil::to_vec(r.mask.data()) == m);
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(r.performance.sensitivity[j] == doctest::Approx(1.0 - kPerformanceClamp).epsilon(1e-12));
        CHECK(r.performance.specificity[j] == doctest::Approx(1.0 - kPerformanceClamp).epsilon(1e-12));
    }
    CHECK(r.converged);
    CHECK(testutil::to_vec(majority_vote(d).data()) == m);
}

TEST_CASE("eight-voxel instance matches a long oracle run") {
    const std::vector<std::uint8_t> a{1, 1, 1, 1, 0, 0, 0, 0};
    const std::vector<std::uint8_t> b{0, 0, 1, 1, 1, 1, 0, 0};
    const std::vector<std::vector<std::uint8_t>> raters{a, a, b};
    const auto d = make_decisions(raters, {1, 1, 8});
    const StapleConfig config;
    const StapleResult r = staple_binary(d, config);
    const double f = oracle::mean_fraction(raters);
    CHECK(r.prior == doctest::Approx(f).epsilon(1e-15));
    const auto o = oracle::staple_em(raters, f, 0.99999, 0.99999, 0.0, 10 * config.max_iterations);
    for (std::size_t i = 0; i < 8; ++i) {
        CAPTURE(i);
        CHECK(std::abs(r.weights[i] - o.W[i]) < 1e-9);
        CHECK(r.mask.at(i) == (o.W[i] >= 0.5));
    }
}

TEST_CASE("random instances agree with the oracle under the same stopping rule") {
    std::mt19937_64 rng(99);
    for (int t = 0; t < 40; ++t) {
        const std::size_t n = 10 + rng() % 300;
        const std::size_t J = 1 + rng() % 6;
        const auto truth = testutil::random_bits(rng, n, 0.1 + 0.6 * (rng() % 100) / 100.0);
        std::vector<std::vector<std::uint8_t>> raters;
        for (std::size_t j = 0; j < J; ++j) {
            auto r = truth;
            testutil::flip_noise(rng, r, 0.02 + 0.2 * (rng() % 100) / 100.0);
            raters.push_back(r);
        }
        const auto d = make_decisions(raters, {1, 1, n});
        const StapleResult res = staple_binary(d, StapleConfig{});
        const auto o = oracle::staple_em(raters, oracle::mean_fraction(raters), 0.99999, 0.99999, 1e-7, 100);
        CHECK(res.iterations == o.iterations);
        double worst = 0.0;
        for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(res.weights[i] - o.W[i]));
        CHECK(worst < 1e-9);
        for (std::size_t j = 0; j < J; ++j) {
            CHECK(std::abs(res.performance.sensitivity[j] - o.p[j]) < 1e-9);
            CHECK(std::abs(res.performance.specificity[j] - o.q[j]) < 1e-9);
        }
    }
}

TEST_CASE("log-likelihood never decreases") {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 20; ++t) {
        const std::size_t n = 500;
        const auto truth = testutil::random_bits(rng, n, 0.3);
        std::vector<std::vector<std::uint8_t>> raters;
        for (int j = 0; j < 4; ++j) {
            auto r = truth;
            testutil::flip_noise(rng, r, 0.05 * (j + 1));
            raters.push_back(r);
        }
        const auto res = staple_binary(make_decisions(raters, {1, 1, n}), StapleConfig{});
        for (std::size_t k = 1; k < res.log_likelihood.size(); ++k)
            CHECK(res.log_likelihood[k] >= res.log_likelihood[k - 1] - 1e-9 * std::abs(res.log_likelihood[k - 1]));
        for (double w : res.weights) CHECK((w >= 0.0 && w <= 1.0));
        for (double p : res.performance.sensitivity) CHECK((p >= kPerformanceClamp && p <= 1.0 - kPerformanceClamp));
    }
}

TEST_CASE("single rater is returned unchanged") {
    std::mt19937_64 rng(8);
    for (int t = 0; t < 10; ++t) {
        const auto m = testutil::random_bits(rng, 64, 0.4);
        const auto r = staple_binary(make_decisions({m}, {4, 4, 4}), StapleConfig{});
        CHECK(testutil::to_vec(r.mask.data()) == m);
    }
}

TEST_CASE("degenerate priors") {
    const std::vector<std::uint8_t> zero(8, 0), one(8, 1);
    const auto empty = staple_binary(make_decisions({zero, zero}, {2, 2, 2}), StapleConfig{});
    CHECK(empty.degenerate);
    CHECK(empty.mask.empty());
    const auto full = staple_binary(make_decisions({one, one}, {2, 2, 2}), StapleConfig{});
    CHECK(full.degenerate);
    CHECK(full.mask.count() == 8);
}

TEST_CASE("explicit prior and validation") {
    StapleConfig c;
    c.prior = 1.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c.prior = 0.3;
    CHECK_NOTHROW(c.validate());
    c.max_iterations = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    CHECK_THROWS_AS(RaterDecisions(Region::ET, Grid::with_dims({1, 1, 2}), 0, {}), std::invalid_argument);
    CHECK_THROWS_AS(RaterDecisions(Region::ET, Grid::with_dims({1, 1, 2}), 2, {1, 0, 1}), std::invalid_argument);

    const std::vector<std::uint8_t> a{1, 1, 0, 0}, b{1, 0, 0, 0};
    StapleConfig fixed;
    fixed.prior = 0.25;
    const auto res = staple_binary(make_decisions({a, b, b}, {1, 1, 4}), fixed);
    const auto o = oracle::staple_em({a, b, b}, 0.25, 0.99999, 0.99999, 1e-7, 100);
    for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(res.weights[i] - o.W[i]) < 1e-9);
}

TEST_CASE("majority vote ties go to background") {
    const std::vector<std::uint8_t> a{1, 1, 0, 0}, b{1, 0, 1, 0}, c{0, 1, 1, 0};
    CHECK(testutil::to_vec(majority_vote(make_decisions({a, b, c}, {1, 1, 4})).data()) ==
          std::vector<std::uint8_t>{1, 1, 1, 0});
    CHECK(testutil::to_vec(majority_vote(make_decisions({a, b}, {1, 1, 4})).data()) ==
          std::vector<std::uint8_t>{1, 0, 0, 0});
}

TEST_CASE("fuse_labels") {
    std::mt19937_64 rng(12);
    const Grid g = Grid::with_dims({4, 4, 4});
    SUBCASE("identical inputs") {
        const LabelVolume l = testutil::random_tumour(rng, g);
        const std::vector<LabelVolume> members{l, l, l};
        CHECK(fuse_labels(members, StapleConfig{}, FusionMethod::Staple) == l);
        CHECK(fuse_labels(members, StapleConfig{}, FusionMethod::Majority) == l);
    }
    SUBCASE("two agreeing members outvote the third") {
        for (int t = 0; t < 10; ++t) {
            const LabelVolume pair = testutil::random_labels(rng, g);
            const LabelVolume odd = testutil::random_labels(rng, g);
            const std::vector<LabelVolume> members{pair, odd, pair};
            // Per-region oracle fusion, rebuilt by hand.
            std::array<std::vector<std::uint8_t>, 3> fused;
            for (Region r : kRegions) {
                fused[static_cast<int>(r)] = oracle::staple_mask(
                    {testutil::region_bits(pair, r), testutil::region_bits(odd, r), testutil::region_bits(pair, r)});
            }
            std::vector<std::uint8_t> expect(g.voxel_count(), 0);
            for (std::size_t i = 0; i < expect.size(); ++i) {
                const bool wt = fused[2][i], tc = fused[1][i] && wt, et = fused[0][i] && tc;
                expect[i] = et ? 3 : tc ? 1 : wt ? 2 : 0;
            }
            const LabelVolume out = fuse_labels(members, StapleConfig{}, FusionMethod::Staple);
            CHECK(testutil::to_vec(out.data()) == expect);
            CHECK(out == pair);
        }
    }
    SUBCASE("output is always nested") {
        for (int t = 0; t < 10; ++t) {
            std::vector<LabelVolume> members;
            for (int j = 0; j < 3; ++j) members.push_back(testutil::random_labels(rng, g));
            const LabelVolume out = fuse_labels(members, StapleConfig{}, FusionMethod::Staple);
            const auto et = testutil::region_bits(out, Region::ET);
            const auto tc = testutil::region_bits(out, Region::TC);
            const auto wt = testutil::region_bits(out, Region::WT);
            for (std::size_t i = 0; i < et.size(); ++i) CHECK((et[i] <= tc[i] && tc[i] <= wt[i]));
        }
    }
    SUBCASE("grid mismatch") {
        const std::vector<LabelVolume> members{LabelVolume::zeros(g), LabelVolume::zeros(Grid::with_dims({4, 4, 5}))};
        CHECK_THROWS_AS(fuse_labels(members, StapleConfig{}, FusionMethod::Staple), DimensionMismatch);
    }
}

}  // TEST_SUITE
