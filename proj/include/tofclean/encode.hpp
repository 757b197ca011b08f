#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tofclean/dataset.hpp"
#include "tofclean/image.hpp"
#include "tofclean/mlp.hpp"

namespace tofclean {

struct CalibModel;  // calib.hpp

/// Clamp applied to range-recovery targets and, symmetrically, to network
/// predictions at inference time.
inline constexpr float kTargetClampMm = 15.f;

struct QuantSpec {
    double min = 0.0;
    double max = 1.0;
    int bins = 20;
};

/// Quantizer bin for a value: floor(bins * (v - min) / (max - min)),
/// clamped to the end bins for out-of-window values.
int quant_bin(double value, const QuantSpec& q);

struct EncoderParams {
    int patch = 11;                        // odd side length
    double range_halfwidth = 30.0;         // mm; x_R = clamp(dR / (2*hw), +-0.5)
    double amp_halfwidth = 1.5;            // half the amplitude window span
    QuantSpec range_quant{150.0, 400.0, 20};
    QuantSpec amp_quant{0.0, 3.0, 20};

    int margin() const { return patch / 2; }
    int patch_inputs() const { return patch * patch - 1; }          // 120
    int vector_size() const { return 2 * patch_inputs() + range_quant.bins + amp_quant.bins; }  // 280
    int boundary_vector_size() const { return 2 * patch_inputs(); } // 240

    void validate() const;
};

/// Per-pixel network input [x_R | x_A | b_R | b_A]:
///   x_R  patch ranges minus center range, scaled into [-0.5, 0.5]
///   x_A  same for amplitudes
///   b_R  one-hot quantization of the center range
///   b_A  one-hot quantization of the center amplitude
/// The boundary networks consume the first 240 entries ([x_R | x_A]).
struct InputVector {
    std::vector<float> values;

    std::span<const float> full() const { return values; }
    std::span<const float> boundary_prefix(const EncoderParams& p) const {
        return {values.data(), static_cast<size_t>(p.boundary_vector_size())};
    }
};

/// True when the patch window around (x, y) lies inside the image and every
/// window pixel is valid.
bool patch_eligible(const RangeImage& range, int x, int y, const EncoderParams& params);

/// Throws Error(Ineligible) when patch_eligible is false.
InputVector encode_patch(const RangeImage& range, const AmplitudeImage& amp, PixelCoord p,
                         const EncoderParams& params);

/// Range-recovery target: clamp(reference - tof, +-15 mm). Throws
/// Error(MissingData) when either pixel is invalid.
float make_range_target(const RangeImage& reference, const RangeImage& tof, PixelCoord p);

/// Builds the range-recovery training set from manifest entries: one sample
/// per pixel with a full valid window and a valid reference, deterministically
/// shuffled by `seed`. When `calib` is non-null the distorted images are
/// calibrated before encoding.
SampleSet build_range_dataset(const std::vector<ManifestEntry>& entries,
                              const std::filesystem::path& root, const CalibModel* calib,
                              const EncoderParams& params, uint64_t seed);

/// p-th percentile (0..100) of the pooled amplitude values of the given
/// images; used to fix the dataset-global amplitude window.
double amplitude_percentile(const std::vector<AmplitudeImage>& images, double percentile);

/// Finalizes amp_quant / amp_halfwidth from training amplitudes:
/// window [0, 99.5th percentile], halfwidth = span / 2.
void fit_amplitude_window(EncoderParams& params, const std::vector<AmplitudeImage>& images);

/// "TFS1" sample cache: magic, u32 count, u32 record stride, then per record
/// float32 LE inputs, target, kind tag. Round-trips bit-exactly.
void save_samples(const SampleSet& samples, const std::filesystem::path& path);
SampleSet load_samples(const std::filesystem::path& path);

}  // namespace tofclean
