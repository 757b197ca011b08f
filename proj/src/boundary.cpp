#include "tofclean/boundary.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>
#include <numeric>

#include "tofclean/calib.hpp"

namespace tofclean {

namespace {

// Folds an angle (radians) into [0, 180) degrees and bins it into the four
// 45-degree sectors centered at 0/45/90/135.
int angle_bin(double radians) {
    double deg = radians * 180.0 / std::numbers::pi;
    deg = std::fmod(deg, 180.0);
    if (deg < 0) deg += 180.0;
    int bin = static_cast<int>(std::floor((deg + 22.5) / 45.0));
    return bin % 4;
}

struct SmoothField {
    std::vector<double> value;
    std::vector<uint8_t> valid;
};

// Separable normalized (mask-weighted) Gaussian. Output stays valid exactly
// where the input pixel was valid.
SmoothField gaussian_smooth_masked(const RangeImage& img, double sigma) {
    int w = img.width, h = img.height;
    int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int k = -radius; k <= radius; ++k) {
        kernel[k + radius] = std::exp(-0.5 * (k * k) / (sigma * sigma));
        sum += kernel[k + radius];
    }
    for (double& v : kernel) v /= sum;

    std::vector<double> num_h(img.data.size(), 0.0), den_h(img.data.size(), 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double num = 0.0, den = 0.0;
            for (int k = -radius; k <= radius; ++k) {
                int qx = x + k;
                if (qx < 0 || qx >= w) continue;
                size_t qi = img.index(qx, y);
                if (!img.valid[qi]) continue;
                num += kernel[k + radius] * img.data[qi];
                den += kernel[k + radius];
            }
            num_h[img.index(x, y)] = num;
            den_h[img.index(x, y)] = den;
        }

    SmoothField out;
    out.value.assign(img.data.size(), 0.0);
    out.valid.assign(img.data.size(), 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            size_t i = img.index(x, y);
            if (!img.valid[i]) continue;
            double num = 0.0, den = 0.0;
            for (int k = -radius; k <= radius; ++k) {
                int qy = y + k;
                if (qy < 0 || qy >= h) continue;
                size_t qi = img.index(x, qy);
                num += kernel[k + radius] * num_h[qi];
                den += kernel[k + radius] * den_h[qi];
            }
            if (den > 0.0) {
                out.value[i] = num / den;
                out.valid[i] = 1;
            }
        }
    return out;
}

}  // namespace

std::vector<float> nms_across(const std::vector<float>& score, const std::vector<uint8_t>& across_axis,
                              int width, int height) {
    static constexpr int kOffsets[4][2][2] = {
        {{-1, 0}, {1, 0}},    // axis 0: horizontal
        {{-1, -1}, {1, 1}},   // axis 1: "\" diagonal
        {{0, -1}, {0, 1}},    // axis 2: vertical
        {{-1, 1}, {1, -1}},   // axis 3: "/" diagonal
    };
    std::vector<float> out(score.size(), 0.f);
    auto value_at = [&](int x, int y) -> float {
        if (x < 0 || x >= width || y < 0 || y >= height) return 0.f;
        return score[static_cast<size_t>(y) * width + x];
    };
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            size_t i = static_cast<size_t>(y) * width + x;
            float s = score[i];
            if (s <= 0.f) continue;
            int a = across_axis[i] & 3;
            float n0 = value_at(x + kOffsets[a][0][0], y + kOffsets[a][0][1]);
            float n1 = value_at(x + kOffsets[a][1][0], y + kOffsets[a][1][1]);
            if (s > n0 && s >= n1) out[i] = s;
        }
    return out;
}

std::vector<uint8_t> hysteresis(const std::vector<float>& score, int width, int height, double low,
                                double high) {
    std::vector<uint8_t> state(score.size(), 0);  // 1 = candidate on stack/visited
    std::vector<size_t> stack;
    for (size_t i = 0; i < score.size(); ++i)
        if (score[i] >= high) {
            state[i] = 1;
            stack.push_back(i);
        }
    while (!stack.empty()) {
        size_t i = stack.back();
        stack.pop_back();
        int x = static_cast<int>(i % width), y = static_cast<int>(i / width);
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                if (dx == 0 && dy == 0) continue;
                int qx = x + dx, qy = y + dy;
                if (qx < 0 || qx >= width || qy < 0 || qy >= height) continue;
                size_t q = static_cast<size_t>(qy) * width + qx;
                if (!state[q] && score[q] >= low) {
                    state[q] = 1;
                    stack.push_back(q);
                }
            }
    }
    return state;
}

EdgeMap gt_edges(const RangeImage& reference, const CannyParams& params) {
    int w = reference.width, h = reference.height;
    SmoothField smooth = gaussian_smooth_masked(reference, params.sigma);

    // Sobel/8 so a linear ramp of k mm/px reads back as gradient k.
    std::vector<float> mag(reference.data.size(), 0.f);
    std::vector<uint8_t> axis(reference.data.size(), 0);
    std::vector<uint8_t> group(reference.data.size(), 0);
    for (int y = 1; y + 1 < h; ++y)
        for (int x = 1; x + 1 < w; ++x) {
            bool ok = true;
            for (int dy = -1; dy <= 1 && ok; ++dy)
                for (int dx = -1; dx <= 1 && ok; ++dx)
                    if (!smooth.valid[reference.index(x + dx, y + dy)]) ok = false;
            if (!ok) continue;
            auto v = [&](int dx, int dy) { return smooth.value[reference.index(x + dx, y + dy)]; };
            double gx = (v(1, -1) + 2.0 * v(1, 0) + v(1, 1) - v(-1, -1) - 2.0 * v(-1, 0) - v(-1, 1)) / 8.0;
            double gy = (v(-1, 1) + 2.0 * v(0, 1) + v(1, 1) - v(-1, -1) - 2.0 * v(0, -1) - v(1, -1)) / 8.0;
            double m = std::hypot(gx, gy);
            if (m <= 0.0) continue;
            size_t i = reference.index(x, y);
            mag[i] = static_cast<float>(m);
            axis[i] = static_cast<uint8_t>(angle_bin(std::atan2(gy, gx)));
            group[i] = static_cast<uint8_t>((axis[i] + 2) % 4);
        }

    std::vector<float> thinned = nms_across(mag, axis, w, h);
    std::vector<uint8_t> binary = hysteresis(thinned, w, h, params.low, params.high);

    EdgeMap map;
    map.width = w;
    map.height = h;
    map.edge = std::move(binary);
    map.group.assign(reference.data.size(), 0);
    map.score.assign(reference.data.size(), 0.f);
    for (size_t i = 0; i < map.edge.size(); ++i)
        if (map.edge[i]) {
            map.group[i] = group[i];
            map.score[i] = 1.f;
        }
    return map;
}

BoundaryDatasets build_boundary_dataset(const std::vector<ManifestEntry>& entries,
                                        const std::filesystem::path& root, const CalibModel* calib,
                                        const EncoderParams& params, const CannyParams& canny,
                                        double negative_ratio, uint64_t seed) {
    params.validate();
    if (negative_ratio < 0.0)
        throw Error(ErrorCode::InvalidArgument, "build_boundary_dataset: negative ratio must be >= 0");

    int dim = params.boundary_vector_size();
    BoundaryDatasets out;
    for (SampleSet& s : out.groups) {
        s.input_dim = dim;
        s.kind = LossKind::CrossEntropy;
    }

    // Encoded vectors per category, gathered across all entries.
    std::array<std::vector<float>, 4> positives;          // inputs of group-g edges
    std::array<std::vector<float>, 4> cross_negatives;    // edges of the other groups
    std::vector<float> nonedge_inputs;

    for (const ManifestEntry& entry : entries) {
        RangeImage raw = read_range_image(root / entry.distorted_range);
        AmplitudeImage amp = read_amplitude_image(root / entry.amplitude);
        RangeImage ref = read_range_image(root / entry.reference_range);
        RangeImage tof = calib ? apply_calibration(*calib, raw, amp) : std::move(raw);
        EdgeMap gt = gt_edges(ref, canny);

        int m = params.margin();
        for (int y = m; y < tof.height - m; ++y)
            for (int x = m; x < tof.width - m; ++x) {
                if (!ref.is_valid(x, y)) continue;
                if (!patch_eligible(tof, x, y, params)) continue;
                InputVector iv = encode_patch(tof, amp, {x, y}, params);
                auto prefix = iv.boundary_prefix(params);
                size_t i = gt.index(x, y);
                if (gt.edge[i]) {
                    int g = gt.group[i];
                    positives[g].insert(positives[g].end(), prefix.begin(), prefix.end());
                    for (int other = 0; other < 4; ++other)
                        if (other != g)
                            cross_negatives[other].insert(cross_negatives[other].end(), prefix.begin(),
                                                          prefix.end());
                } else {
                    nonedge_inputs.insert(nonedge_inputs.end(), prefix.begin(), prefix.end());
                }
            }
    }

    size_t nonedge_count = nonedge_inputs.size() / dim;
    for (int g = 0; g < 4; ++g) {
        SampleSet& set = out.groups[g];
        size_t pos = positives[g].size() / dim;
        size_t cross = cross_negatives[g].size() / dim;
        if (pos == 0)
            std::cerr << "warning: boundary group " << g
                      << " has no positive samples; detector will train constant-negative\n";

        set.inputs.insert(set.inputs.end(), positives[g].begin(), positives[g].end());
        set.labels.assign(pos, 0);
        set.inputs.insert(set.inputs.end(), cross_negatives[g].begin(), cross_negatives[g].end());
        set.labels.insert(set.labels.end(), cross, 1);

        size_t want_neg = static_cast<size_t>(std::llround(negative_ratio * static_cast<double>(pos)));
        size_t sampled = want_neg > cross ? std::min(nonedge_count, want_neg - cross) : 0;
        // A positive-free group still needs rows to train constant-negative.
        if (pos == 0 && cross == 0) sampled = std::min<size_t>(nonedge_count, 1000);

        if (sampled > 0) {
            Rng rng(derive_seed(seed, "boundary-negatives-" + std::to_string(g)));
            std::vector<size_t> order(nonedge_count);
            std::iota(order.begin(), order.end(), size_t{0});
            for (size_t i = nonedge_count; i-- > 1;) {
                size_t j = rng.next_u64() % (i + 1);
                std::swap(order[i], order[j]);
            }
            for (size_t k = 0; k < sampled; ++k) {
                const float* src = nonedge_inputs.data() + order[k] * dim;
                set.inputs.insert(set.inputs.end(), src, src + dim);
                set.labels.push_back(1);
            }
        }
    }
    return out;
}

ResponseField fuse_responses(const BoundaryModelSet& models, const RangeImage& range,
                             const AmplitudeImage& amplitude) {
    if (range.width != amplitude.width || range.height != amplitude.height)
        throw Error(ErrorCode::DimMismatch, "fuse_responses: range/amplitude dimensions disagree");
    for (const MlpModel& net : models.nets)
        if (net.input_size() != models.encoder.boundary_vector_size())
            throw Error(ErrorCode::DimMismatch, "fuse_responses: net input size != encoder vector size");

    ResponseField field;
    field.width = range.width;
    field.height = range.height;
    field.score.assign(range.data.size(), 0.f);
    field.direction.assign(range.data.size(), 0);

    MlpScratch scratch[4];
    int m = models.encoder.margin();
    for (int y = m; y < range.height - m; ++y)
        for (int x = m; x < range.width - m; ++x) {
            if (!patch_eligible(range, x, y, models.encoder)) continue;
            InputVector iv = encode_patch(range, amplitude, {x, y}, models.encoder);
            auto prefix = iv.boundary_prefix(models.encoder);
            double best = -1.0;
            int best_g = 0;
            for (int g = 0; g < 4; ++g) {
                auto logits = forward(models.nets[g], prefix, scratch[g]);
                double p_edge = 1.0 / (1.0 + std::exp(logits[1] - logits[0]));
                if (p_edge > best) {
                    best = p_edge;
                    best_g = g;
                }
            }
            size_t i = field.width * static_cast<size_t>(y) + x;
            field.score[i] = static_cast<float>(best);
            field.direction[i] = static_cast<uint8_t>(best_g);
        }
    return field;
}

EdgeMap detect_boundaries(const BoundaryModelSet& models, const RangeImage& range,
                          const AmplitudeImage& amplitude, const DetectParams& params) {
    ResponseField field = fuse_responses(models, range, amplitude);

    std::vector<uint8_t> across(field.direction.size());
    for (size_t i = 0; i < across.size(); ++i) across[i] = static_cast<uint8_t>((field.direction[i] + 2) % 4);
    std::vector<float> thinned = nms_across(field.score, across, field.width, field.height);
    std::vector<uint8_t> binary = hysteresis(thinned, field.width, field.height, params.low, params.high);

    EdgeMap map;
    map.width = field.width;
    map.height = field.height;
    map.edge = std::move(binary);
    map.score = std::move(thinned);
    map.group.assign(field.direction.size(), 0);
    for (size_t i = 0; i < map.edge.size(); ++i)
        if (map.edge[i]) map.group[i] = field.direction[i];
    return map;
}

void write_edge_map(const EdgeMap& map, const std::filesystem::path& binary_path,
                    const std::filesystem::path& orient_path) {
    ImageFile binary;
    binary.channel = Channel::EdgeBinary;
    binary.width = map.width;
    binary.height = map.height;
    binary.data.resize(map.edge.size());
    for (size_t i = 0; i < map.edge.size(); ++i) binary.data[i] = map.edge[i] ? 1.f : 0.f;
    write_image(binary, binary_path);

    ImageFile orient;
    orient.channel = Channel::OrientationGroup;
    orient.width = map.width;
    orient.height = map.height;
    orient.data.resize(map.group.size());
    for (size_t i = 0; i < map.group.size(); ++i) orient.data[i] = static_cast<float>(map.group[i]);
    orient.has_mask = true;
    orient.mask = map.edge;
    write_image(orient, orient_path);
}

EdgeMap read_edge_map(const std::filesystem::path& binary_path,
                      const std::filesystem::path& orient_path) {
    ImageFile binary = read_image(binary_path);
    if (binary.channel != Channel::EdgeBinary)
        throw Error(ErrorCode::Corruption, binary_path.string() + ": expected edge-binary channel");
    ImageFile orient = read_image(orient_path);
    if (orient.channel != Channel::OrientationGroup)
        throw Error(ErrorCode::Corruption, orient_path.string() + ": expected orientation channel");
    if (binary.width != orient.width || binary.height != orient.height)
        throw Error(ErrorCode::DimMismatch, "edge map planes have differing dimensions");

    EdgeMap map;
    map.width = binary.width;
    map.height = binary.height;
    map.edge.resize(binary.data.size());
    map.score.resize(binary.data.size());
    map.group.resize(binary.data.size());
    for (size_t i = 0; i < binary.data.size(); ++i) {
        map.edge[i] = binary.data[i] != 0.f ? 1 : 0;
        map.score[i] = map.edge[i] ? 1.f : 0.f;
        map.group[i] = static_cast<uint8_t>(orient.data[i]);
    }
    return map;
}

}  // namespace tofclean
