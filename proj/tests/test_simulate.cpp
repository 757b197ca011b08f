#include <doctest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "test_util.hpp"
#include "tofclean/simulate.hpp"

using namespace tofclean;

namespace {

Scene flat_scene(int w, int h, double depth, double reflect = 0.8) {
    Scene s;
    s.width = w;
    s.height = h;
    s.platform_depth = depth;
    s.platform_reflectivity = reflect;
    return s;
}

// All ways to split the sorted values into contiguous runs; exactly one is
// consistent with the gap rule, and it must match fuse_reference.
struct OracleFusion {
    bool valid = false;
    float median = 0.f;
};

OracleFusion oracle_fuse(std::vector<float> values, double radius, int min_points) {
    OracleFusion result;
    if (values.empty()) return result;
    std::sort(values.begin(), values.end());
    size_t n = values.size();

    for (uint32_t split_mask = 0; split_mask < (1u << (n - 1)); ++split_mask) {
        // Runs: a set bit after position i splits between i and i+1.
        bool consistent = true;
        for (size_t i = 0; i + 1 < n; ++i) {
            bool split = (split_mask >> i) & 1;
            bool gap = values[i + 1] - values[i] > radius;
            if (split != gap) {
                consistent = false;
                break;
            }
        }
        if (!consistent) continue;

        size_t begin = 0;
        double best_mean = 0.0;
        size_t best_begin = 0, best_end = 0;
        bool have = false;
        for (size_t i = 0; i < n; ++i) {
            bool end_run = i + 1 == n || ((split_mask >> i) & 1);
            if (!end_run) continue;
            double mean = 0.0;
            for (size_t j = begin; j <= i; ++j) mean += values[j];
            mean /= static_cast<double>(i - begin + 1);
            if (!have || mean < best_mean) {
                have = true;
                best_mean = mean;
                best_begin = begin;
                best_end = i + 1;
            }
            begin = i + 1;
        }
        size_t count = best_end - best_begin;
        if (count < static_cast<size_t>(min_points)) return result;
        size_t mid = best_begin + count / 2;
        result.valid = true;
        result.median = count % 2 == 1 ? values[mid]
                                       : static_cast<float>((static_cast<double>(values[mid - 1]) +
                                                             values[mid]) /
                                                            2.0);
        return result;
    }
    return result;
}

}  // namespace

TEST_CASE("empty scene renders a constant plane") {
    Rendered r = render_reference(flat_scene(8, 6, 300.0));
    for (float v : r.range.data) CHECK(v == 300.f);
    for (uint8_t m : r.range.valid) CHECK(m == 1);
}

TEST_CASE("a box renders as a two-level step") {
    Scene s = flat_scene(20, 20, 300.0);
    s.objects.push_back({10.0, 10.0, 3.0, 3.0, 200.0, 0.5});
    Rendered r = render_reference(s);
    CHECK(r.range.at(10, 10) == 200.f);
    CHECK(r.range.at(2, 2) == 300.f);
}

TEST_CASE("amplitude follows reflectivity over squared relative range") {
    Rendered r = render_reference(flat_scene(4, 4, 300.0, 0.8));
    // 0.8 / (300/250)^2 = 0.5556
    CHECK(r.amplitude.at(1, 1) == doctest::Approx(0.55556).epsilon(1e-4));
}

TEST_CASE("multipath is the exact identity on flat scenes and zero params") {
    Rendered r = render_reference(flat_scene(12, 9, 320.0));
    DistortionParams params;  // defaults, nonzero
    params.noise_sigma = 0.0;
    RangeImage out = apply_multipath(r.range, r.amplitude, params, 7);
    CHECK(out.data == r.range.data);

    Scene s = flat_scene(12, 9, 320.0);
    s.objects.push_back({6.0, 4.0, 2.0, 2.0, 250.0, 0.6});
    Rendered stepped = render_reference(s);
    DistortionParams zero;
    zero.psf_radius = 0;
    zero.overshoot_gain = 0.0;
    zero.overshoot_radius = 0;
    zero.noise_sigma = 0.0;
    RangeImage out2 = apply_multipath(stepped.range, stepped.amplitude, zero, 7);
    CHECK(out2.data == stepped.range.data);
}

TEST_CASE("boundary mixing matches the hand-evaluated blend on a 1-D step") {
    RangeImage ref = RangeImage::constant(6, 1, 200.f);
    for (int x = 3; x < 6; ++x) ref.at(x, 0) = 300.f;
    AmplitudeImage amp = AmplitudeImage::constant(6, 1, 1.f);
    DistortionParams p;
    p.psf_radius = 1;
    p.overshoot_gain = 0.0;
    p.overshoot_radius = 0;
    p.noise_sigma = 0.0;
    RangeImage out = apply_multipath(ref, amp, p, 0);
    CHECK(out.at(2, 0) == doctest::Approx((200.0 + 200.0 + 300.0) / 3.0).epsilon(1e-6));
    CHECK(out.at(0, 0) == 200.f);
}

TEST_CASE("overshoot bias is nonnegative everywhere") {
    Scene s = flat_scene(24, 24, 330.0);
    s.objects.push_back({8.0, 8.0, 4.0, 4.0, 230.0, 0.9});
    s.objects.push_back({17.0, 15.0, 3.0, 5.0, 280.0, 0.4});
    Rendered r = render_reference(s);

    DistortionParams mix_only;
    mix_only.overshoot_gain = 0.0;
    mix_only.noise_sigma = 0.0;
    DistortionParams with_overshoot = mix_only;
    with_overshoot.overshoot_gain = 0.15;

    RangeImage mixed = apply_multipath(r.range, r.amplitude, mix_only, 3);
    RangeImage distorted = apply_multipath(r.range, r.amplitude, with_overshoot, 3);
    bool any_positive = false;
    for (size_t i = 0; i < mixed.data.size(); ++i) {
        CHECK(distorted.data[i] >= mixed.data[i]);
        if (distorted.data[i] > mixed.data[i]) any_positive = true;
    }
    CHECK(any_positive);
}

TEST_CASE("multipath is deterministic in the seed") {
    Scene s = flat_scene(16, 16, 300.0);
    s.objects.push_back({8.0, 8.0, 3.0, 3.0, 240.0, 0.7});
    Rendered r = render_reference(s);
    DistortionParams p;  // noise on
    RangeImage a = apply_multipath(r.range, r.amplitude, p, 99);
    RangeImage b = apply_multipath(r.range, r.amplitude, p, 99);
    RangeImage c = apply_multipath(r.range, r.amplitude, p, 100);
    CHECK(a.data == b.data);
    CHECK(a.data != c.data);
}

TEST_CASE("scansets: zero jitter and no occlusion reproduce the reference") {
    Scene s = flat_scene(10, 10, 280.0);
    s.objects.push_back({5.0, 5.0, 2.0, 2.0, 220.0, 0.5});
    ScanOptions opts;
    opts.count = 5;
    opts.jitter_sigma = 0.0;
    opts.occlusion_sites = 0;
    ScanSet set = generate_scanset(s, opts, 3);
    Rendered clean = render_reference(s);
    REQUIRE(set.scans.size() == 5);
    for (const RangeImage& scan : set.scans) {
        CHECK(scan.data == clean.range.data);
        CHECK(scan.valid == clean.range.valid);
    }
}

TEST_CASE("scansets are deterministic at the default scan count") {
    Scene s = flat_scene(12, 12, 300.0);
    ScanOptions opts;
    opts.count = 30;
    ScanSet a = generate_scanset(s, opts, 11);
    ScanSet b = generate_scanset(s, opts, 11);
    REQUIRE(a.scans.size() == 30);
    for (size_t i = 0; i < a.scans.size(); ++i) {
        CHECK(a.scans[i].data == b.scans[i].data);
        CHECK(a.scans[i].valid == b.scans[i].valid);
    }
}

TEST_CASE("fusion picks the nearest cluster median") {
    ScanSet set;
    for (float v : {199.f, 200.f, 201.f, 350.f}) {
        RangeImage img = RangeImage::constant(1, 1, v);
        set.scans.push_back(img);
    }
    RangeImage fused = fuse_reference(set, 10.0, 2);
    CHECK(fused.valid[0] == 1);
    CHECK(fused.data[0] == 200.f);
}

TEST_CASE("fusion of agreeing scans returns their value") {
    ScanSet set;
    for (int i = 0; i < 3; ++i) set.scans.push_back(RangeImage::constant(2, 2, 250.f));
    RangeImage fused = fuse_reference(set, 10.0, 2);
    for (size_t i = 0; i < fused.data.size(); ++i) {
        CHECK(fused.valid[i] == 1);
        CHECK(fused.data[i] == 250.f);
    }
}

TEST_CASE("fusion marks starved pixels missing") {
    ScanSet set;
    RangeImage a = RangeImage::constant(1, 1, 250.f);
    RangeImage b = RangeImage::constant(1, 1, 250.f);
    b.valid[0] = 0;
    set.scans = {a, b};
    CHECK(fuse_reference(set, 10.0, 2).valid[0] == 0);  // single valid value
    CHECK(fuse_reference(set, 10.0, 1).valid[0] == 1);
}

TEST_CASE("fusion agrees with the partition-enumeration oracle") {
    Rng rng(71);
    for (int trial = 0; trial < 500; ++trial) {
        int n = rng.uniform_int(0, 8);
        ScanSet set;
        std::vector<float> values;
        for (int i = 0; i < std::max(n, 1); ++i) {
            RangeImage img = RangeImage::constant(1, 1, 0.f);
            if (i < n) {
                float v = static_cast<float>(rng.uniform(150.0, 400.0));
                if (rng.uniform() < 0.4 && !values.empty())
                    v = values.back() + static_cast<float>(rng.uniform(-12.0, 12.0));
                img.data[0] = std::max(0.f, v);
                values.push_back(img.data[0]);
            } else {
                img.valid[0] = 0;
            }
            set.scans.push_back(img);
        }
        int min_points = rng.uniform_int(1, 4);
        RangeImage fused = fuse_reference(set, 10.0, min_points);
        OracleFusion expected = oracle_fuse(values, 10.0, min_points);
        CHECK(static_cast<bool>(fused.valid[0]) == expected.valid);
        if (expected.valid) CHECK(fused.data[0] == expected.median);
    }
}

TEST_CASE("systematic fields invert through their defining affine relation") {
    Rng rng(73);
    SystematicField f = make_systematic_field(6, 6, 0.03, 2.0, 6.0, 5);
    RangeImage range = testutil::random_range_image(6, 6, rng);
    AmplitudeImage amp = testutil::random_amplitude_image(6, 6, rng);
    RangeImage obs = apply_systematic(f, range, amp);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) {
            size_t i = range.index(x, y);
            double expect = static_cast<double>(f.gain[i]) * range.data[i] +
                            static_cast<double>(f.amp_coef[i]) * amp.data[i] + f.offset[i];
            CHECK(obs.data[i] == doctest::Approx(expect).epsilon(1e-6));
        }
}

TEST_CASE("scene JSON round-trips") {
    Scene s = flat_scene(32, 24, 333.0, 0.77);
    s.objects.push_back({10.0, 11.0, 3.5, 2.5, 250.0, 0.66});
    nlohmann::json j = scene_to_json(s);
    Scene back = scene_from_json(j);
    CHECK(back.width == s.width);
    CHECK(back.platform_depth == s.platform_depth);
    REQUIRE(back.objects.size() == 1);
    CHECK(back.objects[0].top_depth == 250.0);
}

TEST_CASE("scene validation rejects bad geometry") {
    Scene s = flat_scene(16, 16, 300.0);
    s.objects.push_back({2.0, 8.0, 5.0, 2.0, 250.0, 0.5});  // leaves the left edge
    CHECK_THROWS_AS(s.validate(), Error);
    s.objects[0] = {8.0, 8.0, 2.0, 2.0, 350.0, 0.5};  // behind the platform
    CHECK_THROWS_AS(s.validate(), Error);
}
