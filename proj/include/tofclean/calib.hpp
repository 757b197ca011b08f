#pragma once

#include <filesystem>
#include <vector>

#include "tofclean/image.hpp"

namespace tofclean {

/// Per-pixel linear model: true_range ~ a*range + b*amplitude + c (mm).
/// Coefficients are kept in double precision; the file format stores them
/// as float32.
struct CalibModel {
    int width = 0;
    int height = 0;
    std::vector<double> a;
    std::vector<double> b;
    std::vector<double> c;

    static CalibModel identity(int width, int height);

    size_t index(int x, int y) const { return static_cast<size_t>(y) * width + x; }
    void validate() const;

    bool operator==(const CalibModel&) const = default;
};

/// Streaming per-pixel normal-equation accumulator for the calibration fit.
/// Observations with an invalid truth pixel are skipped.
class CalibAccumulator {
public:
    CalibAccumulator(int width, int height);

    void add_frame(const RangeImage& observed, const AmplitudeImage& amplitude,
                   const RangeImage& truth);
    void add_observation(int x, int y, double range, double amplitude, double truth);

    /// Closed-form least squares per pixel. Throws Error(Underdetermined),
    /// naming the pixel, when a pixel has fewer than 3 observations or a
    /// numerically singular system.
    CalibModel fit() const;

    int width() const { return width_; }
    int height() const { return height_; }

private:
    int width_;
    int height_;
    // Per pixel: upper triangle of the 3x3 Gram matrix over features
    // (range, amplitude, 1), the right-hand side, and the sample count.
    struct Sums {
        double rr = 0, ra = 0, r = 0, aa = 0, a = 0, n = 0;
        double yr = 0, ya = 0, y = 0;
    };
    std::vector<Sums> sums_;
};

/// Convenience wrapper over CalibAccumulator for in-memory frame triples.
struct CalibFrame {
    RangeImage observed;
    AmplitudeImage amplitude;
    RangeImage truth;
};

CalibModel fit_calibration(const std::vector<CalibFrame>& frames);

/// out(p) = a*range(p) + b*amp(p) + c; the validity mask passes through.
RangeImage apply_calibration(const CalibModel& model, const RangeImage& range,
                             const AmplitudeImage& amplitude);

/// "TFC1" file: magic, u32 LE width/height, then width*height float32 LE
/// (a, b, c) triples.
void save_calib(const CalibModel& model, const std::filesystem::path& path);
CalibModel load_calib(const std::filesystem::path& path);

}  // namespace tofclean
