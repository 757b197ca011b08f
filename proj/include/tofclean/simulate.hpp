#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tofclean/image.hpp"

namespace tofclean {

/// Axis-aligned box resting on the platform, seen top-down: a rectangle of
/// constant depth `top_depth` (mm, closer than the platform).
struct SceneObject {
    double center_x = 0;
    double center_y = 0;
    double half_w = 0;   // pixels
    double half_h = 0;   // pixels
    double top_depth = 0;      // mm
    double reflectivity = 1.0; // (0, 1]
};

struct Scene {
    int width = 0;
    int height = 0;
    double platform_depth = 300.0;        // mm
    double platform_reflectivity = 0.8;
    std::vector<SceneObject> objects;

    void validate() const;
};

/// Phenomenological multipath model: boundary mixing within psf_radius plus
/// a nonnegative bias where deeper structure is nearby, plus Gaussian noise.
struct DistortionParams {
    int psf_radius = 2;           // pixels
    double overshoot_gain = 0.15;
    int overshoot_radius = 4;     // pixels
    double noise_sigma = 1.0;     // mm

    void validate() const;
};

struct ScanOptions {
    int count = 30;
    double jitter_sigma = 1.0;      // mm per-pixel noise per scan
    int occlusion_sites = 2;        // per-scene occlusion anchor patches
    int occlusion_half_max = 5;     // max half side of an occlusion patch
    double occlusion_rate = 0.95;   // chance a site is occluded in one scan
};

struct ScanSet {
    std::vector<RangeImage> scans;
};

struct Rendered {
    RangeImage range;
    AmplitudeImage amplitude;
};

/// Clean render: per pixel the frontmost surface depth; amplitude is
/// reflectivity / (range / 250mm)^2. All pixels valid.
Rendered render_reference(const Scene& scene);

/// Output = mix + overshoot + noise, where mix is the amplitude-weighted
/// blend of reference ranges within psf_radius and overshoot is
/// gain * mean(max(0, ref(q) - ref(p))) over the overshoot window.
/// Exactly the identity on constant scenes when noise_sigma is 0.
RangeImage apply_multipath(const RangeImage& reference, const AmplitudeImage& amplitude,
                           const DistortionParams& params, uint64_t seed);

/// Jittered re-renders with per-scan occlusion patches marked invalid.
ScanSet generate_scanset(const Scene& scene, const ScanOptions& options, uint64_t seed);

/// Per pixel: single-linkage clusters over the valid scan values (sorted
/// gaps > cluster_radius split), pick the cluster with the smallest mean,
/// output its median; pixels whose chosen cluster has fewer than min_points
/// values are marked missing.
RangeImage fuse_reference(const ScanSet& scanset, double cluster_radius, int min_points);

/// Per-pixel affine sensor bias: observed = gain*r + amp_coef*A + offset.
/// This is the intrinsic systematic error the calibration stage removes.
struct SystematicField {
    int width = 0;
    int height = 0;
    std::vector<float> gain;
    std::vector<float> amp_coef;
    std::vector<float> offset;
};

SystematicField make_systematic_field(int width, int height, double gain_spread,
                                      double amp_coupling, double offset_spread, uint64_t seed);

RangeImage apply_systematic(const SystematicField& field, const RangeImage& range,
                            const AmplitudeImage& amplitude);

Scene scene_from_json(const nlohmann::json& j);
nlohmann::json scene_to_json(const Scene& scene);

}  // namespace tofclean
