#pragma once

#include <span>
#include <vector>

#include "tofclean/boundary.hpp"
#include "tofclean/image.hpp"

namespace tofclean {

struct AccuracyCurve {
    std::vector<double> thresholds;  // mm
    std::vector<double> fraction;    // correct fraction, same length
};

/// Pools correct/total counts per threshold across one or more image
/// pairs. A pixel counts when the reference is valid and the region mask
/// (if any) covers it; it is correct when |est - ref| < threshold.
class AccuracyAccumulator {
public:
    explicit AccuracyAccumulator(std::vector<double> thresholds);

    void add(const RangeImage& est, const RangeImage& ref, const std::vector<uint8_t>* region_mask);

    /// Throws Error(MissingData) when no pixel was evaluable.
    AccuracyCurve curve() const;

private:
    std::vector<double> thresholds_;
    std::vector<size_t> correct_;
    size_t total_ = 0;
};

AccuracyCurve accuracy_curve(const RangeImage& est, const RangeImage& ref,
                             std::span<const double> thresholds,
                             const std::vector<uint8_t>* region_mask = nullptr);

/// Pixels within Chebyshev distance `margin` of any GT edge pixel.
std::vector<uint8_t> boundary_region_mask(const EdgeMap& gt, int margin);

struct PrPoint {
    double threshold = 0.0;
    double precision = 1.0;
    double recall = 1.0;
    double f1 = 0.0;
};

struct PrCurve {
    std::vector<PrPoint> points;
    double best_f1 = 0.0;
};

/// Counts one-to-one matches between two pixel sets: candidate pairs within
/// Euclidean distance `tolerance` are processed nearest-first (ties broken
/// by the unordered index pair, so the count is symmetric in the roles).
size_t match_edge_pixels(const std::vector<PixelCoord>& a, const std::vector<PixelCoord>& b,
                         double tolerance);

/// Precision/recall over a sweep of score thresholds; the predicted set at
/// threshold t is {p : pred.score(p) >= t}. Empty prediction sets score
/// precision 1 by convention (and empty GT recall 1).
PrCurve edge_pr(const EdgeMap& pred, const EdgeMap& gt, double match_tolerance,
                std::span<const double> thresholds);

/// Pools matched/predicted/GT counts per threshold across several images
/// (matching never crosses image boundaries).
class PrAccumulator {
public:
    PrAccumulator(std::vector<double> thresholds, double match_tolerance);

    void add(const EdgeMap& pred, const EdgeMap& gt);
    PrCurve curve() const;

private:
    std::vector<double> thresholds_;
    double tolerance_;
    std::vector<size_t> tp_, npred_;
    size_t ngt_ = 0;
};

/// Default 0.02-step threshold ladder over (0, 1].
std::vector<double> default_pr_thresholds();

}  // namespace tofclean
