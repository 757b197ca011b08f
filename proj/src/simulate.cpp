#include "tofclean/simulate.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

namespace tofclean {

namespace {
constexpr double kReferenceRangeMm = 250.0;
}

void Scene::validate() const {
    if (width <= 0 || height <= 0)
        throw Error(ErrorCode::InvalidArgument, "scene: dimensions must be positive");
    if (!(platform_depth > 0.0))
        throw Error(ErrorCode::InvalidArgument, "scene: platform depth must be positive");
    if (!(platform_reflectivity > 0.0) || platform_reflectivity > 1.0)
        throw Error(ErrorCode::InvalidArgument, "scene: platform reflectivity must be in (0,1]");
    for (const SceneObject& o : objects) {
        if (!(o.top_depth > 0.0) || o.top_depth >= platform_depth)
            throw Error(ErrorCode::InvalidArgument, "scene: object top depth must be in front of the platform");
        if (!(o.reflectivity > 0.0) || o.reflectivity > 1.0)
            throw Error(ErrorCode::InvalidArgument, "scene: object reflectivity must be in (0,1]");
        if (o.half_w <= 0 || o.half_h <= 0 || o.center_x - o.half_w < 0 || o.center_y - o.half_h < 0 ||
            o.center_x + o.half_w > width - 1 || o.center_y + o.half_h > height - 1)
            throw Error(ErrorCode::InvalidArgument, "scene: object footprint leaves the image bounds");
    }
}

void DistortionParams::validate() const {
    if (psf_radius < 0 || psf_radius > 10 || overshoot_radius < 0 || overshoot_radius > 10)
        throw Error(ErrorCode::InvalidArgument, "distortion: radii must be in [0, 10]");
    if (overshoot_gain < 0.0 || noise_sigma < 0.0)
        throw Error(ErrorCode::InvalidArgument, "distortion: gain and noise sigma must be >= 0");
}

Rendered render_reference(const Scene& scene) {
    scene.validate();
    Rendered out;
    out.range = RangeImage::constant(scene.width, scene.height, static_cast<float>(scene.platform_depth));
    out.amplitude = AmplitudeImage::constant(scene.width, scene.height, 0.f);

    std::vector<double> reflect(out.range.data.size(), scene.platform_reflectivity);
    for (const SceneObject& o : scene.objects) {
        int x0 = static_cast<int>(std::ceil(o.center_x - o.half_w));
        int x1 = static_cast<int>(std::floor(o.center_x + o.half_w));
        int y0 = static_cast<int>(std::ceil(o.center_y - o.half_h));
        int y1 = static_cast<int>(std::floor(o.center_y + o.half_h));
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                size_t i = out.range.index(x, y);
                if (o.top_depth < out.range.data[i]) {
                    out.range.data[i] = static_cast<float>(o.top_depth);
                    reflect[i] = o.reflectivity;
                }
            }
    }
    for (size_t i = 0; i < out.range.data.size(); ++i) {
        double ratio = out.range.data[i] / kReferenceRangeMm;
        out.amplitude.data[i] = static_cast<float>(reflect[i] / (ratio * ratio));
    }
    return out;
}

RangeImage apply_multipath(const RangeImage& reference, const AmplitudeImage& amplitude,
                           const DistortionParams& params, uint64_t seed) {
    params.validate();
    if (reference.width != amplitude.width || reference.height != amplitude.height)
        throw Error(ErrorCode::DimMismatch, "apply_multipath: range/amplitude dimensions disagree");

    int w = reference.width, h = reference.height;
    RangeImage out = reference;
    Rng rng(seed);

    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            size_t i = reference.index(x, y);
            if (!reference.valid[i]) continue;
            double center = reference.data[i];

            // Boundary mixing: amplitude-weighted blend over the PSF window,
            // anchored at the center value so flat regions pass through
            // bit-exactly.
            double wsum = 0.0, dsum = 0.0;
            for (int dy = -params.psf_radius; dy <= params.psf_radius; ++dy)
                for (int dx = -params.psf_radius; dx <= params.psf_radius; ++dx) {
                    int qx = x + dx, qy = y + dy;
                    if (!reference.in_bounds(qx, qy) || !reference.is_valid(qx, qy)) continue;
                    double a = amplitude.at(qx, qy);
                    wsum += a;
                    dsum += a * (reference.at(qx, qy) - center);
                }
            double mixed = wsum > 0.0 ? center + dsum / wsum : center;

            // Concavity overshoot: nonnegative bias from deeper structure in
            // the neighborhood (zero for same-surface neighbors).
            double overshoot = 0.0;
            if (params.overshoot_gain > 0.0 && params.overshoot_radius > 0) {
                double acc = 0.0;
                int count = 0;
                for (int dy = -params.overshoot_radius; dy <= params.overshoot_radius; ++dy)
                    for (int dx = -params.overshoot_radius; dx <= params.overshoot_radius; ++dx) {
                        int qx = x + dx, qy = y + dy;
                        if (!reference.in_bounds(qx, qy) || !reference.is_valid(qx, qy)) continue;
                        acc += std::max(0.0, static_cast<double>(reference.at(qx, qy)) - center);
                        ++count;
                    }
                if (count > 0) overshoot = params.overshoot_gain * acc / count;
            }

            double noise = params.noise_sigma > 0.0 ? rng.normal(0.0, params.noise_sigma) : 0.0;
            out.data[i] = static_cast<float>(mixed + overshoot + noise);
        }
    return out;
}

ScanSet generate_scanset(const Scene& scene, const ScanOptions& options, uint64_t seed) {
    if (options.count < 1)
        throw Error(ErrorCode::InvalidArgument, "generate_scanset: need at least one scan");
    Rendered clean = render_reference(scene);
    Rng rng(seed);

    // Per-scene occlusion anchors; each scan occludes each site with high
    // probability so fused pixels can genuinely end up missing.
    struct Site {
        int x, y, half;
    };
    std::vector<Site> sites;
    for (int s = 0; s < options.occlusion_sites; ++s) {
        Site site;
        site.x = rng.uniform_int(0, scene.width - 1);
        site.y = rng.uniform_int(0, scene.height - 1);
        site.half = rng.uniform_int(1, std::max(1, options.occlusion_half_max));
        sites.push_back(site);
    }

    ScanSet set;
    for (int s = 0; s < options.count; ++s) {
        RangeImage scan = clean.range;
        if (options.jitter_sigma > 0.0)
            for (float& v : scan.data) v = static_cast<float>(v + rng.normal(0.0, options.jitter_sigma));
        for (const Site& site : sites) {
            if (rng.uniform() >= options.occlusion_rate) continue;
            int jx = site.x + rng.uniform_int(-1, 1);
            int jy = site.y + rng.uniform_int(-1, 1);
            for (int y = std::max(0, jy - site.half); y <= std::min(scene.height - 1, jy + site.half); ++y)
                for (int x = std::max(0, jx - site.half); x <= std::min(scene.width - 1, jx + site.half); ++x)
                    scan.valid[scan.index(x, y)] = 0;
        }
        set.scans.push_back(std::move(scan));
    }
    return set;
}

RangeImage fuse_reference(const ScanSet& scanset, double cluster_radius, int min_points) {
    if (scanset.scans.empty()) throw Error(ErrorCode::MissingData, "fuse_reference: empty scan set");
    int w = scanset.scans.front().width, h = scanset.scans.front().height;
    for (const RangeImage& s : scanset.scans)
        if (s.width != w || s.height != h)
            throw Error(ErrorCode::DimMismatch, "fuse_reference: scans have differing dimensions");

    RangeImage out = RangeImage::constant(w, h, 0.f);
    std::vector<float> values;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            size_t i = out.index(x, y);
            values.clear();
            for (const RangeImage& s : scanset.scans)
                if (s.valid[i]) values.push_back(s.data[i]);
            if (values.empty()) {
                out.valid[i] = 0;
                continue;
            }
            std::sort(values.begin(), values.end());

            // Contiguous runs in sorted order; a gap > cluster_radius starts
            // a new cluster. The nearest cluster is the first run.
            size_t best_begin = 0, best_end = 0;
            double best_mean = 0.0;
            bool have_best = false;
            size_t begin = 0;
            for (size_t k = 1; k <= values.size(); ++k) {
                if (k == values.size() || values[k] - values[k - 1] > cluster_radius) {
                    double mean = 0.0;
                    for (size_t j = begin; j < k; ++j) mean += values[j];
                    mean /= static_cast<double>(k - begin);
                    if (!have_best || mean < best_mean) {
                        have_best = true;
                        best_mean = mean;
                        best_begin = begin;
                        best_end = k;
                    }
                    begin = k;
                }
            }
            size_t count = best_end - best_begin;
            if (count < static_cast<size_t>(min_points)) {
                out.valid[i] = 0;
                continue;
            }
            size_t mid = best_begin + count / 2;
            float median = count % 2 == 1
                               ? values[mid]
                               : static_cast<float>((static_cast<double>(values[mid - 1]) + values[mid]) / 2.0);
            out.data[i] = median;
        }
    return out;
}

SystematicField make_systematic_field(int width, int height, double gain_spread,
                                      double amp_coupling, double offset_spread, uint64_t seed) {
    SystematicField f;
    f.width = width;
    f.height = height;
    size_t n = static_cast<size_t>(width) * height;
    f.gain.resize(n);
    f.amp_coef.resize(n);
    f.offset.resize(n);
    Rng rng(seed);
    for (size_t i = 0; i < n; ++i) {
        f.gain[i] = static_cast<float>(1.0 + gain_spread * rng.uniform(-1.0, 1.0));
        f.amp_coef[i] = static_cast<float>(amp_coupling * rng.uniform(-1.0, 1.0));
        f.offset[i] = static_cast<float>(offset_spread * rng.uniform(-1.0, 1.0));
    }
    return f;
}

RangeImage apply_systematic(const SystematicField& field, const RangeImage& range,
                            const AmplitudeImage& amplitude) {
    if (range.width != field.width || range.height != field.height ||
        amplitude.width != field.width || amplitude.height != field.height)
        throw Error(ErrorCode::DimMismatch, "apply_systematic: dimensions disagree with field");
    RangeImage out = range;
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = static_cast<float>(static_cast<double>(field.gain[i]) * range.data[i] +
                                         static_cast<double>(field.amp_coef[i]) * amplitude.data[i] +
                                         field.offset[i]);
    return out;
}

Scene scene_from_json(const nlohmann::json& j) {
    Scene scene;
    scene.width = j.at("width").get<int>();
    scene.height = j.at("height").get<int>();
    scene.platform_depth = j.at("platform_depth").get<double>();
    scene.platform_reflectivity = j.value("platform_reflectivity", 0.8);
    for (const auto& jo : j.value("objects", nlohmann::json::array())) {
        SceneObject o;
        o.center_x = jo.at("center_x").get<double>();
        o.center_y = jo.at("center_y").get<double>();
        o.half_w = jo.at("half_w").get<double>();
        o.half_h = jo.at("half_h").get<double>();
        o.top_depth = jo.at("top_depth").get<double>();
        o.reflectivity = jo.at("reflectivity").get<double>();
        scene.objects.push_back(o);
    }
    scene.validate();
    return scene;
}

nlohmann::json scene_to_json(const Scene& scene) {
    nlohmann::json j;
    j["width"] = scene.width;
    j["height"] = scene.height;
    j["platform_depth"] = scene.platform_depth;
    j["platform_reflectivity"] = scene.platform_reflectivity;
    j["objects"] = nlohmann::json::array();
    for (const SceneObject& o : scene.objects) {
        nlohmann::json jo;
        jo["center_x"] = o.center_x;
        jo["center_y"] = o.center_y;
        jo["half_w"] = o.half_w;
        jo["half_h"] = o.half_h;
        jo["top_depth"] = o.top_depth;
        jo["reflectivity"] = o.reflectivity;
        j["objects"].push_back(jo);
    }
    return j;
}

}  // namespace tofclean
