#include "doctest.h"
#include "support.hpp"
#include "tta/augment.hpp"

using namespace tta;

TEST_CASE("amplitude scale of exactly 1.0 is the identity") {
    auto w = ttest::random_batch(1, 8, 3, 1).data;
    auto orig = w;
    amplitude_scale(w.data(), 8, 3, 1.0);
    CHECK(w == orig);
}

TEST_CASE("jitter with zero std is the identity") {
    auto w = ttest::random_batch(1, 8, 3, 2).data;
    auto orig = w;
    Rng rng(5);
    gaussian_jitter(w.data(), 8, 3, {0.0, 0.0, 0.0}, rng);
    CHECK(w == orig);
}

TEST_CASE("time shift +1 repeats the leading boundary value") {
    std::vector<double> w = {1, 2, 3, 4};
    time_shift(w.data(), 4, 1, +1);
    CHECK(w == std::vector<double>{1, 1, 2, 3});

    std::vector<double> v = {1, 2, 3, 4};
    time_shift(v.data(), 4, 1, -1);
    CHECK(v == std::vector<double>{2, 3, 4, 4});

    std::vector<double> u = {1, 2, 3, 4};
    time_shift(u.data(), 4, 1, 0);
    CHECK(u == std::vector<double>{1, 2, 3, 4});
}

TEST_CASE("cutout of length zero is the identity; fill is the window mean") {
    std::vector<double> w = {1, 2, 3, 4};
    auto orig = w;
    time_cutout(w.data(), 4, 1, 1, 0);
    CHECK(w == orig);

    time_cutout(w.data(), 4, 1, 1, 2);
    CHECK(w == std::vector<double>{1, 2.5, 2.5, 4});
}

TEST_CASE("amplitude scaling satisfies the 5% sup-norm bound") {
    Rng rng(17);
    for (int rep = 0; rep < 50; ++rep) {
        auto b = ttest::random_batch(1, 16, 2, 100 + rep);
        auto orig = b.data;
        TransformSpec spec;
        spec.kind = TransformKind::AmplitudeScale;
        apply_transform(b.data.data(), 16, 2, spec, {}, rng);
        double max_diff = 0.0, max_abs = 0.0;
        for (std::size_t i = 0; i < orig.size(); ++i) {
            max_diff = std::max(max_diff, std::fabs(b.data[i] - orig[i]));
            max_abs = std::max(max_abs, std::fabs(orig[i]));
        }
        CHECK(max_diff <= 0.05 * max_abs + 1e-12);
    }
}

TEST_CASE("transform output shape is always L x d") {
    auto set = AugmentationSet::from_names({"scale", "jitter", "shift", "cutout"},
                                           std::vector<double>(3, 1.0));
    Rng rng(3);
    auto batch = ttest::random_batch(5, 12, 3, 4);
    for (int rep = 0; rep < 20; ++rep) {
        auto out = transform_batch(batch, set, rng);
        CHECK(out.L == batch.L);
        CHECK(out.d == batch.d);
        CHECK(out.count == batch.count);
        CHECK(out.data.size() == batch.data.size());
    }
}

TEST_CASE("same window, spec and seed give identical output") {
    auto set = AugmentationSet::from_names({"scale", "jitter", "cutout"},
                                           std::vector<double>(2, 1.0));
    auto batch = ttest::random_batch(3, 10, 2, 6);
    Rng r1(99), r2(99);
    auto a = transform_batch(batch, set, r1);
    auto b = transform_batch(batch, set, r2);
    CHECK(a.data == b.data);
}

TEST_CASE("transforms are pure functions of the window itself") {
    // two batches share window 0 but differ in window 1; the transformed
    // window 0 must be identical (no cross-window reads)
    auto set = AugmentationSet::from_names({"scale", "jitter", "shift", "cutout"},
                                           std::vector<double>(2, 1.0));
    auto b1 = ttest::random_batch(2, 10, 2, 7);
    auto b2 = b1;
    for (std::size_t i = b1.window_size(); i < b2.data.size(); ++i) b2.data[i] += 5.0;
    for (int rep = 0; rep < 10; ++rep) {
        Rng r1(1000 + rep), r2(1000 + rep);
        auto a = transform_batch(b1, set, r1);
        auto b = transform_batch(b2, set, r2);
        for (std::size_t i = 0; i < b1.window_size(); ++i) CHECK(a.data[i] == b.data[i]);
    }
}

TEST_CASE("out-of-range spec parameters are rejected") {
    TransformSpec spec;
    spec.kind = TransformKind::AmplitudeScale;
    spec.scale_hi = 1.5;  // beyond the 5% contract
    auto w = ttest::random_batch(1, 8, 1, 8);
    Rng rng(1);
    CHECK_THROWS_AS(apply_transform(w.data.data(), 8, 1, spec, {}, rng), Error);

    TransformSpec jit;
    jit.kind = TransformKind::GaussianJitter;
    jit.jitter_rel_sd = 0.5;
    CHECK_THROWS_AS(apply_transform(w.data.data(), 8, 1, jit, {1.0}, rng), Error);
}
