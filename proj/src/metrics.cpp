#include "tofclean/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace tofclean {

AccuracyAccumulator::AccuracyAccumulator(std::vector<double> thresholds)
    : thresholds_(std::move(thresholds)), correct_(thresholds_.size(), 0) {}

void AccuracyAccumulator::add(const RangeImage& est, const RangeImage& ref,
                              const std::vector<uint8_t>* region_mask) {
    if (est.width != ref.width || est.height != ref.height)
        throw Error(ErrorCode::DimMismatch, "accuracy: estimate/reference dimensions disagree");
    if (region_mask && region_mask->size() != ref.data.size())
        throw Error(ErrorCode::DimMismatch, "accuracy: region mask size disagrees");
    for (size_t i = 0; i < ref.data.size(); ++i) {
        if (!ref.valid[i]) continue;
        if (region_mask && !(*region_mask)[i]) continue;
        ++total_;
        double dev = std::fabs(static_cast<double>(est.data[i]) - ref.data[i]);
        for (size_t t = 0; t < thresholds_.size(); ++t)
            if (dev < thresholds_[t]) ++correct_[t];
    }
}

AccuracyCurve AccuracyAccumulator::curve() const {
    if (total_ == 0) throw Error(ErrorCode::MissingData, "accuracy: no evaluable pixels");
    AccuracyCurve c;
    c.thresholds = thresholds_;
    c.fraction.resize(thresholds_.size());
    for (size_t t = 0; t < thresholds_.size(); ++t)
        c.fraction[t] = static_cast<double>(correct_[t]) / static_cast<double>(total_);
    return c;
}

AccuracyCurve accuracy_curve(const RangeImage& est, const RangeImage& ref,
                             std::span<const double> thresholds,
                             const std::vector<uint8_t>* region_mask) {
    AccuracyAccumulator acc(std::vector<double>(thresholds.begin(), thresholds.end()));
    acc.add(est, ref, region_mask);
    return acc.curve();
}

std::vector<uint8_t> boundary_region_mask(const EdgeMap& gt, int margin) {
    if (margin < 0) throw Error(ErrorCode::InvalidArgument, "boundary mask: margin must be >= 0");
    std::vector<uint8_t> mask = gt.edge;
    std::vector<uint8_t> next(mask.size());
    for (int step = 0; step < margin; ++step) {
        for (int y = 0; y < gt.height; ++y)
            for (int x = 0; x < gt.width; ++x) {
                uint8_t v = 0;
                for (int dy = -1; dy <= 1 && !v; ++dy)
                    for (int dx = -1; dx <= 1 && !v; ++dx) {
                        int qx = x + dx, qy = y + dy;
                        if (qx < 0 || qx >= gt.width || qy < 0 || qy >= gt.height) continue;
                        if (mask[gt.index(qx, qy)]) v = 1;
                    }
                next[gt.index(x, y)] = v;
            }
        mask.swap(next);
    }
    return mask;
}

size_t match_edge_pixels(const std::vector<PixelCoord>& a, const std::vector<PixelCoord>& b,
                         double tolerance) {
    struct Pair {
        int d2;
        size_t lo, hi;  // unordered row-independent key for symmetric ties
        size_t ia, ib;
    };
    // Pixel sets live on a shared grid, so the row-major index of each pixel
    // gives the role-independent tie key.
    auto key = [](const PixelCoord& p) { return (static_cast<size_t>(p.y) << 24) | static_cast<size_t>(p.x); };
    double tol2 = tolerance * tolerance;

    std::vector<Pair> pairs;
    for (size_t i = 0; i < a.size(); ++i)
        for (size_t j = 0; j < b.size(); ++j) {
            int dx = a[i].x - b[j].x, dy = a[i].y - b[j].y;
            int d2 = dx * dx + dy * dy;
            if (static_cast<double>(d2) > tol2) continue;
            size_t ka = key(a[i]), kb = key(b[j]);
            pairs.push_back({d2, std::min(ka, kb), std::max(ka, kb), i, j});
        }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& l, const Pair& r) {
        if (l.d2 != r.d2) return l.d2 < r.d2;
        if (l.lo != r.lo) return l.lo < r.lo;
        return l.hi < r.hi;
    });

    std::vector<uint8_t> used_a(a.size(), 0), used_b(b.size(), 0);
    size_t matched = 0;
    for (const Pair& p : pairs) {
        if (used_a[p.ia] || used_b[p.ib]) continue;
        used_a[p.ia] = used_b[p.ib] = 1;
        ++matched;
    }
    return matched;
}

PrCurve edge_pr(const EdgeMap& pred, const EdgeMap& gt, double match_tolerance,
                std::span<const double> thresholds) {
    if (pred.width != gt.width || pred.height != gt.height)
        throw Error(ErrorCode::DimMismatch, "edge_pr: map dimensions disagree");

    std::vector<PixelCoord> gt_pixels;
    for (int y = 0; y < gt.height; ++y)
        for (int x = 0; x < gt.width; ++x)
            if (gt.edge[gt.index(x, y)]) gt_pixels.push_back({x, y});

    PrCurve curve;
    for (double t : thresholds) {
        std::vector<PixelCoord> pred_pixels;
        for (int y = 0; y < pred.height; ++y)
            for (int x = 0; x < pred.width; ++x)
                if (pred.score[pred.index(x, y)] >= t) pred_pixels.push_back({x, y});

        size_t tp = match_edge_pixels(pred_pixels, gt_pixels, match_tolerance);
        PrPoint pt;
        pt.threshold = t;
        pt.precision = pred_pixels.empty() ? 1.0 : static_cast<double>(tp) / pred_pixels.size();
        pt.recall = gt_pixels.empty() ? 1.0 : static_cast<double>(tp) / gt_pixels.size();
        pt.f1 = pt.precision + pt.recall > 0.0
                    ? 2.0 * pt.precision * pt.recall / (pt.precision + pt.recall)
                    : 0.0;
        curve.points.push_back(pt);
        curve.best_f1 = std::max(curve.best_f1, pt.f1);
    }
    return curve;
}

PrAccumulator::PrAccumulator(std::vector<double> thresholds, double match_tolerance)
    : thresholds_(std::move(thresholds)),
      tolerance_(match_tolerance),
      tp_(thresholds_.size(), 0),
      npred_(thresholds_.size(), 0) {}

void PrAccumulator::add(const EdgeMap& pred, const EdgeMap& gt) {
    if (pred.width != gt.width || pred.height != gt.height)
        throw Error(ErrorCode::DimMismatch, "edge_pr: map dimensions disagree");
    std::vector<PixelCoord> gt_pixels;
    for (int y = 0; y < gt.height; ++y)
        for (int x = 0; x < gt.width; ++x)
            if (gt.edge[gt.index(x, y)]) gt_pixels.push_back({x, y});
    ngt_ += gt_pixels.size();
    for (size_t t = 0; t < thresholds_.size(); ++t) {
        std::vector<PixelCoord> pred_pixels;
        for (int y = 0; y < pred.height; ++y)
            for (int x = 0; x < pred.width; ++x)
                if (pred.score[pred.index(x, y)] >= thresholds_[t]) pred_pixels.push_back({x, y});
        tp_[t] += match_edge_pixels(pred_pixels, gt_pixels, tolerance_);
        npred_[t] += pred_pixels.size();
    }
}

PrCurve PrAccumulator::curve() const {
    PrCurve curve;
    for (size_t t = 0; t < thresholds_.size(); ++t) {
        PrPoint pt;
        pt.threshold = thresholds_[t];
        pt.precision = npred_[t] == 0 ? 1.0 : static_cast<double>(tp_[t]) / npred_[t];
        pt.recall = ngt_ == 0 ? 1.0 : static_cast<double>(tp_[t]) / ngt_;
        pt.f1 = pt.precision + pt.recall > 0.0
                    ? 2.0 * pt.precision * pt.recall / (pt.precision + pt.recall)
                    : 0.0;
        curve.points.push_back(pt);
        curve.best_f1 = std::max(curve.best_f1, pt.f1);
    }
    return curve;
}

std::vector<double> default_pr_thresholds() {
    std::vector<double> t;
    for (int i = 1; i <= 50; ++i) t.push_back(i * 0.02);
    return t;
}

}  // namespace tofclean
