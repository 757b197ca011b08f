#pragma once

#include <filesystem>
#include <vector>

#include "tofclean/dataset.hpp"
#include "tofclean/encode.hpp"
#include "tofclean/image.hpp"
#include "tofclean/mlp.hpp"

namespace tofclean {

/// The range-recovery regressor plus the encoder that feeds it
/// (280 -> 40 -> 10 -> 10 -> 1, linear head).
struct RangeRecoveryModel {
    EncoderParams encoder;
    MlpModel net;

    void validate() const;
};

/// Architecture constructors with the layer widths fixed.
MlpModel make_range_net(int input_size, uint64_t seed);     // hiddens [40, 10, 10], 1 output
MlpModel make_boundary_net(int input_size, uint64_t seed);  // hiddens [40, 20], 2 outputs

struct RangeTrainResult {
    RangeRecoveryModel model;
    TrainLog log;
    size_t sample_count = 0;
};

/// Builds the training set from the manifest entries (calibrating inputs
/// when `calib` is given) and trains F. Throws Error(MissingData) when no
/// pixel is eligible.
RangeTrainResult train_range_nn(const std::vector<ManifestEntry>& entries,
                                const std::filesystem::path& root, const CalibModel* calib,
                                const EncoderParams& encoder, const TrainConfig& config);

/// R_F = clamp(F(patch), +-15 mm) + R at every encoder-eligible pixel.
/// Ineligible pixels pass R through unchanged; the returned image's validity
/// mask flags exactly the eligible (predicted) pixels.
RangeImage recover_range(const RangeRecoveryModel& model, const RangeImage& range,
                         const AmplitudeImage& amplitude);

/// Bundle file: u32 JSON length + encoder/descriptor JSON + embedded "TFM1"
/// model payload.
void save_range_model(const RangeRecoveryModel& model, const std::filesystem::path& path);
RangeRecoveryModel load_range_model(const std::filesystem::path& path);

/// Shared bundle plumbing (also used by the boundary detector files).
void save_model_bundle(const EncoderParams& encoder, const MlpModel& net, const std::string& role,
                       const std::filesystem::path& path);
struct ModelBundle {
    EncoderParams encoder;
    MlpModel net;
    std::string role;
};
ModelBundle load_model_bundle(const std::filesystem::path& path);

}  // namespace tofclean
