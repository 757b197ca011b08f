#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "tofclean/dataset.hpp"
#include "tofclean/encode.hpp"
#include "tofclean/image.hpp"
#include "tofclean/mlp.hpp"

namespace tofclean {

/// Binary boundary map with per-pixel orientation group and likelihood
/// score. `group` is meaningful only where `edge` is set. Orientation
/// groups quantize the edge tangent into 45-degree bins centered at
/// 0/45/90/135 degrees (group 2 = vertical edge line).
struct EdgeMap {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> edge;
    std::vector<uint8_t> group;
    std::vector<float> score;  // in [0, 1]; post-thinning for detections

    size_t index(int x, int y) const { return static_cast<size_t>(y) * width + x; }

    bool operator==(const EdgeMap&) const = default;
};

struct CannyParams {
    double sigma = 1.0;  // Gaussian smoothing, pixels
    double low = 2.0;    // hysteresis thresholds on gradient magnitude, mm/px
    double high = 6.0;
};

/// Full Canny on a range image: masked Gaussian smoothing, Sobel/8
/// gradients, non-maximum suppression along the gradient, hysteresis.
/// Pixels whose gradient window touches a missing pixel never fire.
EdgeMap gt_edges(const RangeImage& reference, const CannyParams& params);

/// Keeps a pixel's score only where it is a local maximum against its two
/// neighbors along the across-edge axis (0 horizontal, 1 "\" diagonal,
/// 2 vertical, 3 "/" diagonal); applying it twice equals applying it once.
std::vector<float> nms_across(const std::vector<float>& score, const std::vector<uint8_t>& across_axis,
                              int width, int height);

/// Two-threshold binarization: seeds at score >= high, grown 8-connected
/// through score >= low.
std::vector<uint8_t> hysteresis(const std::vector<float>& score, int width, int height, double low,
                                double high);

/// Four orientation-specific detectors over the 240-dim [x_R | x_A] input.
struct BoundaryModelSet {
    EncoderParams encoder;
    std::array<MlpModel, 4> nets;
};

/// Per-group training data: positives are GT edges of the group; negatives
/// are GT edges of the other groups plus sampled non-edge pixels, topped up
/// to `negative_ratio` negatives per positive. Label 0 = edge, 1 = non-edge.
struct BoundaryDatasets {
    std::array<SampleSet, 4> groups;
};

BoundaryDatasets build_boundary_dataset(const std::vector<ManifestEntry>& entries,
                                        const std::filesystem::path& root, const CalibModel* calib,
                                        const EncoderParams& params, const CannyParams& canny,
                                        double negative_ratio, uint64_t seed);

/// Pre-suppression fused responses: per pixel the maximum edge probability
/// over the four detectors and the winning group (ties to the lowest index).
struct ResponseField {
    int width = 0;
    int height = 0;
    std::vector<float> score;
    std::vector<uint8_t> direction;  // winning orientation group
};

ResponseField fuse_responses(const BoundaryModelSet& models, const RangeImage& range,
                             const AmplitudeImage& amplitude);

struct DetectParams {
    // Hysteresis thresholds on probability scores. Walls err on the side of
    // recall: a spurious wall only suppresses smoothing locally, a missing
    // one mixes surfaces.
    double low = 0.15;
    double high = 0.35;
};

/// fuse_responses + NMS across the winning direction + hysteresis.
EdgeMap detect_boundaries(const BoundaryModelSet& models, const RangeImage& range,
                          const AmplitudeImage& amplitude, const DetectParams& params);

/// Edge maps persist as two image files: `<stem>.tfd` holds the binary
/// plane (channel 2) with the score plane re-derivable, and
/// `<stem>_orient.tfd` holds orientation groups (channel 3) masked to edge
/// pixels. Scores travel separately where needed.
void write_edge_map(const EdgeMap& map, const std::filesystem::path& binary_path,
                    const std::filesystem::path& orient_path);
EdgeMap read_edge_map(const std::filesystem::path& binary_path,
                      const std::filesystem::path& orient_path);

}  // namespace tofclean
