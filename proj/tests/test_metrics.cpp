#include <doctest.h>

#include <cmath>

#include "oracle_geodesic.hpp"
#include "test_util.hpp"
#include "tofclean/metrics.hpp"

using namespace tofclean;

namespace {

EdgeMap edges_from_pixels(int w, int h, const std::vector<PixelCoord>& pixels) {
    EdgeMap map;
    map.width = w;
    map.height = h;
    map.edge.assign(static_cast<size_t>(w) * h, 0);
    map.group.assign(map.edge.size(), 0);
    map.score.assign(map.edge.size(), 0.f);
    for (const PixelCoord& p : pixels) {
        map.edge[map.index(p.x, p.y)] = 1;
        map.score[map.index(p.x, p.y)] = 1.f;
    }
    return map;
}

}  // namespace

TEST_CASE("exact estimates score 1 at every threshold") {
    Rng rng(201);
    RangeImage ref = testutil::random_range_image(12, 12, rng, 0.1);
    std::vector<double> thresholds = {1, 5, 10};
    AccuracyCurve c = accuracy_curve(ref, ref, thresholds);
    for (double f : c.fraction) CHECK(f == 1.0);
}

TEST_CASE("half the pixels off by 10 mm scores 0.5 at 5 mm") {
    RangeImage ref = RangeImage::constant(10, 10, 300.f);
    RangeImage est = ref;
    for (int i = 0; i < 50; ++i) est.data[i] += 10.f;
    std::vector<double> thresholds = {5.0};
    AccuracyCurve c = accuracy_curve(est, ref, thresholds);
    CHECK(c.fraction[0] == 0.5);
}

TEST_CASE("deviation comparison is strict") {
    RangeImage ref = RangeImage::constant(4, 1, 300.f);
    RangeImage est = ref;
    for (float& v : est.data) v += 5.f;
    std::vector<double> thresholds = {5.0, 5.0001};
    AccuracyCurve c = accuracy_curve(est, ref, thresholds);
    CHECK(c.fraction[0] == 0.0);  // exactly 5 is not "less than 5"
    CHECK(c.fraction[1] == 1.0);
}

TEST_CASE("missing reference pixels are excluded from both sides of the ratio") {
    RangeImage ref = RangeImage::constant(8, 8, 300.f);
    for (int i = 0; i < 16; ++i) ref.valid[i] = 0;
    RangeImage est = ref;
    std::vector<double> thresholds = {5.0};
    AccuracyCurve base = accuracy_curve(est, ref, thresholds);

    RangeImage poisoned = est;
    for (int i = 0; i < 16; ++i) poisoned.data[i] = 9e6f;
    poisoned.valid = est.valid;
    AccuracyCurve after = accuracy_curve(poisoned, ref, thresholds);
    CHECK(after.fraction == base.fraction);
}

TEST_CASE("an empty evaluable region is an error") {
    RangeImage ref = RangeImage::constant(4, 4, 300.f);
    std::fill(ref.valid.begin(), ref.valid.end(), 0);
    std::vector<double> thresholds = {5.0};
    try {
        accuracy_curve(ref, ref, thresholds);
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MissingData);
    }
}

TEST_CASE("accuracy curves are monotone in the threshold") {
    Rng rng(203);
    RangeImage ref = testutil::random_range_image(16, 16, rng);
    RangeImage est = ref;
    for (float& v : est.data) v += static_cast<float>(rng.normal(0.0, 4.0));
    std::vector<double> thresholds;
    for (int t = 1; t <= 15; ++t) thresholds.push_back(t);
    AccuracyCurve c = accuracy_curve(est, ref, thresholds);
    for (size_t i = 1; i < c.fraction.size(); ++i) CHECK(c.fraction[i] >= c.fraction[i - 1]);
}

TEST_CASE("boundary region mask is the Chebyshev ball around edges") {
    EdgeMap none = edges_from_pixels(9, 9, {});
    std::vector<uint8_t> empty = boundary_region_mask(none, 5);
    for (uint8_t v : empty) CHECK(v == 0);

    EdgeMap one = edges_from_pixels(20, 20, {{10, 10}});
    std::vector<uint8_t> mask = boundary_region_mask(one, 5);
    size_t count = 0;
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 20; ++x) {
            bool inside = std::max(std::abs(x - 10), std::abs(y - 10)) <= 5;
            CHECK(static_cast<bool>(mask[one.index(x, y)]) == inside);
            count += mask[one.index(x, y)];
        }
    CHECK(count == 11 * 11);

    // Clipping at the border.
    EdgeMap corner = edges_from_pixels(20, 20, {{0, 0}});
    std::vector<uint8_t> cmask = boundary_region_mask(corner, 5);
    size_t ccount = 0;
    for (uint8_t v : cmask) ccount += v;
    CHECK(ccount == 6 * 6);

    // Region restriction equivalence: masked accuracy equals accuracy over
    // the cropped pixel set.
    Rng rng(205);
    RangeImage ref = testutil::random_range_image(20, 20, rng);
    RangeImage est = ref;
    for (float& v : est.data) v += static_cast<float>(rng.normal(0.0, 4.0));
    std::vector<double> thresholds = {3.0, 6.0};
    AccuracyCurve masked = accuracy_curve(est, ref, thresholds, &mask);
    size_t correct3 = 0, total = 0;
    for (size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        ++total;
        if (std::fabs(static_cast<double>(est.data[i]) - ref.data[i]) < 3.0) ++correct3;
    }
    CHECK(masked.fraction[0] == doctest::Approx(static_cast<double>(correct3) / total).epsilon(1e-12));
}

TEST_CASE("full-image edges give a full mask") {
    EdgeMap all = edges_from_pixels(6, 6, {});
    std::fill(all.edge.begin(), all.edge.end(), 1);
    std::vector<uint8_t> mask = boundary_region_mask(all, 5);
    for (uint8_t v : mask) CHECK(v == 1);
}

TEST_CASE("identical maps score perfect precision and recall at zero tolerance") {
    EdgeMap gt = edges_from_pixels(16, 16, {{3, 3}, {4, 3}, {10, 12}});
    std::vector<double> thresholds = {0.5};
    PrCurve pr = edge_pr(gt, gt, 0.0, thresholds);
    CHECK(pr.best_f1 == 1.0);
    CHECK(pr.points[0].precision == 1.0);
    CHECK(pr.points[0].recall == 1.0);
}

TEST_CASE("a 1-pixel shift matches at tolerance 2 but not 0") {
    std::vector<PixelCoord> gt_pixels, shifted;
    for (int y = 4; y < 12; ++y) {
        gt_pixels.push_back({8, y});
        shifted.push_back({9, y});
    }
    EdgeMap gt = edges_from_pixels(16, 16, gt_pixels);
    EdgeMap pred = edges_from_pixels(16, 16, shifted);
    std::vector<double> thresholds = {0.5};
    CHECK(edge_pr(pred, gt, 2.0, thresholds).best_f1 == 1.0);
    CHECK(edge_pr(pred, gt, 0.0, thresholds).points[0].precision == 0.0);
}

TEST_CASE("empty predictions have recall 0 and precision 1 by convention") {
    EdgeMap gt = edges_from_pixels(8, 8, {{2, 2}});
    EdgeMap pred = edges_from_pixels(8, 8, {});
    std::vector<double> thresholds = {0.5};
    PrCurve pr = edge_pr(pred, gt, 2.0, thresholds);
    CHECK(pr.points[0].precision == 1.0);
    CHECK(pr.points[0].recall == 0.0);
}

TEST_CASE("matching is one-to-one") {
    // Two predictions near one GT pixel: only one can match.
    EdgeMap gt = edges_from_pixels(8, 8, {{4, 4}});
    EdgeMap pred = edges_from_pixels(8, 8, {{4, 4}, {5, 4}});
    std::vector<double> thresholds = {0.5};
    PrCurve pr = edge_pr(pred, gt, 2.0, thresholds);
    CHECK(pr.points[0].precision == 0.5);
    CHECK(pr.points[0].recall == 1.0);
}

TEST_CASE("precision/recall swap symmetry holds under role reversal") {
    Rng rng(207);
    for (int trial = 0; trial < 25; ++trial) {
        std::vector<PixelCoord> a_pixels, b_pixels;
        for (int i = 0; i < 30; ++i) {
            if (rng.uniform() < 0.6) a_pixels.push_back({rng.uniform_int(0, 15), rng.uniform_int(0, 15)});
            if (rng.uniform() < 0.6) b_pixels.push_back({rng.uniform_int(0, 15), rng.uniform_int(0, 15)});
        }
        EdgeMap a = edges_from_pixels(16, 16, a_pixels);
        EdgeMap b = edges_from_pixels(16, 16, b_pixels);
        std::vector<double> thresholds = {0.5};
        PrCurve ab = edge_pr(a, b, 2.0, thresholds);
        PrCurve ba = edge_pr(b, a, 2.0, thresholds);
        CHECK(ab.points[0].precision == doctest::Approx(ba.points[0].recall).epsilon(1e-12));
        CHECK(ab.points[0].recall == doctest::Approx(ba.points[0].precision).epsilon(1e-12));
    }
}

TEST_CASE("threshold sweeps respect the score field") {
    EdgeMap gt = edges_from_pixels(8, 8, {{3, 3}, {5, 5}});
    EdgeMap pred = edges_from_pixels(8, 8, {{3, 3}, {5, 5}, {1, 6}});
    pred.score[pred.index(3, 3)] = 0.9f;
    pred.score[pred.index(5, 5)] = 0.6f;
    pred.score[pred.index(1, 6)] = 0.2f;
    std::vector<double> thresholds = {0.1, 0.5, 0.8};
    PrCurve pr = edge_pr(pred, gt, 0.0, thresholds);
    CHECK(pr.points[0].precision == doctest::Approx(2.0 / 3.0));
    CHECK(pr.points[1].precision == 1.0);
    CHECK(pr.points[1].recall == 1.0);
    CHECK(pr.points[2].recall == 0.5);
    CHECK(pr.best_f1 == 1.0);
}
