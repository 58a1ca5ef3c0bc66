#include <doctest.h>

#include <random>

#include "gliomakit/preprocess.hpp"
#include "oracles/stats_oracle.hpp"

using namespace gliomakit;

namespace {

ScalarVolume line(std::vector<double> v) {
    const std::size_t n = v.size();
    return ScalarVolume(Grid::with_dims({1, 1, n}), std::move(v));
}

ScalarVolume random_brain(std::mt19937_64& rng, std::size_t edge, double background_fraction) {
    std::normal_distribution<double> tissue(400.0, 90.0);
    std::bernoulli_distribution bg(background_fraction);
    std::vector<double> v(edge * edge * edge);
    for (auto& x : v) x = bg(rng) ? 0.0 : tissue(rng);
    return ScalarVolume(Grid::with_dims({edge, edge, edge}), std::move(v));
}

}  // namespace

TEST_SUITE("preprocess") {

TEST_CASE("z-score of {2, 4}") {
    const ScalarVolume z = zscore_normalize(line({0.0, 2.0, 4.0}), NormalizationPolicy{});
    CHECK(z.data()[0] == 0.0);
    CHECK(z.data()[1] == -1.0);
    CHECK(z.data()[2] == 1.0);
}

TEST_CASE("background handling") {
    NormalizationPolicy with_bg;
    with_bg.include_background = true;
    const ScalarVolume z = zscore_normalize(line({0.0, 0.0, 3.0, 3.0}), with_bg);
    CHECK(z.data()[0] == -1.0);
    CHECK(z.data()[3] == 1.0);
    CHECK(inclusion_mask(line({0.0, -1.0, 2.0}), NormalizationPolicy{}) == std::vector<std::uint8_t>{0, 1, 1});
}

TEST_CASE("degenerate inputs") {
    CHECK_THROWS_AS(zscore_normalize(line({5.0, 5.0, 5.0}), NormalizationPolicy{}), DegenerateSpread);
    CHECK_THROWS_AS(zscore_normalize(line({0.0, 0.0}), NormalizationPolicy{}), DegenerateSpread);
    CHECK_THROWS_AS(zscore_normalize(line({0.0, 7.0}), NormalizationPolicy{}), DegenerateSpread);
    CHECK_THROWS_AS(rescale_percentiles(line({0.0, 0.0}), RescaleSpec{}, NormalizationPolicy{}), DegenerateSpread);
    CHECK_THROWS_AS(rescale_percentiles(line({1.0, 1.0, 1.0}), RescaleSpec{}, NormalizationPolicy{}),
                    DegenerateSpread);
    CHECK_THROWS_AS(zscore_normalize(line({1.0, 2.0}), NormalizationPolicy{}, std::vector<std::uint8_t>{1}),
                    DimensionMismatch);
}

TEST_CASE("invalid configuration") {
    CHECK_THROWS_AS((RescaleSpec{50, 50, 0, 1}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((RescaleSpec{-1, 50, 0, 1}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((RescaleSpec{2, 98, 1, 1}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((NormalizationPolicy{false, 0.0}.validate()), std::invalid_argument);
}

TEST_CASE("random volume meets the z-score post-conditions") {
    std::mt19937_64 rng(21);
    for (int t = 0; t < 10; ++t) {
        const ScalarVolume v = random_brain(rng, 8, 0.3);
        const auto include = inclusion_mask(v, NormalizationPolicy{});
        const ScalarVolume z = zscore_normalize(v, NormalizationPolicy{});
        std::vector<double> raw, out;
        for (std::size_t i = 0; i < include.size(); ++i) {
            if (include[i]) {
                raw.push_back(v.data()[i]);
                out.push_back(z.data()[i]);
            } else {
                CHECK(z.data()[i] == 0.0);
            }
        }
        const auto before = oracle::mean_std(raw, false);
        const auto after = oracle::mean_std(out, false);
        CHECK(std::abs(after.mean) < 1e-6);
        CHECK(std::abs(after.std - 1.0) < 1e-6);
        for (std::size_t k = 0; k < raw.size(); ++k)
            CHECK(out[k] == doctest::Approx((raw[k] - before.mean) / before.std).epsilon(1e-10));
        const IntensityStats s = included_stats(v.data(), include);
        CHECK(s.count == raw.size());
        CHECK(s.mean == doctest::Approx(before.mean).epsilon(1e-12));
        CHECK(s.stddev == doctest::Approx(before.std).epsilon(1e-12));
    }
}

TEST_CASE("ramp 0..100 rescales onto the P2..P98 window") {
    std::vector<double> ramp(101);
    for (int i = 0; i <= 100; ++i) ramp[i] = i;
    NormalizationPolicy all;
    all.include_background = true;
    const ScalarVolume r = rescale_percentiles(line(ramp), RescaleSpec{}, all);
    CHECK(r.data()[2] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(r.data()[98] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.data()[100] == 1.0);
    CHECK(r.data()[0] == 0.0);
    CHECK(r.data()[50] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("two values map to the ends; below-window values clamp exactly") {
    NormalizationPolicy all;
    all.include_background = true;
    RescaleSpec full{0.0, 100.0, 0.0, 1.0};
    const ScalarVolume r = rescale_percentiles(line({3.0, 9.0}), full, all);
    CHECK(r.data()[0] == 0.0);
    CHECK(r.data()[1] == 1.0);

    std::vector<double> v(200);
    for (int i = 0; i < 200; ++i) v[i] = i + 1.0;
    v[0] = -500.0;
    const ScalarVolume c = rescale_percentiles(line(v), RescaleSpec{}, NormalizationPolicy{});
    CHECK(c.data()[0] == 0.0);
}

TEST_CASE("custom output range and excluded voxels") {
    std::vector<double> v{0.0, 1.0, 2.0, 3.0, 4.0};
    const ScalarVolume r = rescale_percentiles(line(v), RescaleSpec{0.0, 100.0, -1.0, 1.0}, NormalizationPolicy{});
    CHECK(r.data()[0] == -1.0);  // excluded
    CHECK(r.data()[1] == -1.0);
    CHECK(r.data()[4] == 1.0);
    CHECK(r.data()[2] == doctest::Approx(-1.0 / 3.0));
}

TEST_CASE("rescale matches the percentile oracle on random volumes") {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 10; ++t) {
        const ScalarVolume v = random_brain(rng, 10, 0.4);
        const auto include = inclusion_mask(v, NormalizationPolicy{});
        const ScalarVolume r = rescale_percentiles(v, RescaleSpec{}, NormalizationPolicy{});
        std::vector<double> sorted;
        for (std::size_t i = 0; i < include.size(); ++i)
            if (include[i]) sorted.push_back(v.data()[i]);
        std::sort(sorted.begin(), sorted.end());
        const double lo = oracle::percentile(sorted, 2.0), hi = oracle::percentile(sorted, 98.0);
        for (std::size_t i = 0; i < include.size(); ++i) {
            const double expect = include[i] ? std::clamp((v.data()[i] - lo) / (hi - lo), 0.0, 1.0) : 0.0;
            CHECK(std::abs(r.data()[i] - expect) < 1e-9);
        }
    }
}

TEST_CASE("preprocess_modality keeps the raw inclusion set") {
    // After the z-score the value 4 maps to exactly 0; it must still count.
    const ScalarVolume v = line({0.0, 2.0, 4.0, 6.0});
    PreprocessConfig config;
    config.rescale = RescaleSpec{0.0, 100.0, 0.0, 1.0};
    const ScalarVolume out = preprocess_modality(v, config);
    CHECK(out.data()[0] == 0.0);
    CHECK(out.data()[1] == 0.0);
    CHECK(out.data()[2] == doctest::Approx(0.5));
    CHECK(out.data()[3] == 1.0);
}

}  // TEST_SUITE
