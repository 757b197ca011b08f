#include "tofclean/encode.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "tofclean/calib.hpp"

namespace tofclean {

int quant_bin(double value, const QuantSpec& q) {
    double t = static_cast<double>(q.bins) * (value - q.min) / (q.max - q.min);
    int bin = static_cast<int>(std::floor(t));
    return std::clamp(bin, 0, q.bins - 1);
}

void EncoderParams::validate() const {
    if (patch < 3 || patch % 2 == 0)
        throw Error(ErrorCode::InvalidArgument, "encoder: patch side must be odd and >= 3");
    if (range_quant.bins <= 0 || amp_quant.bins <= 0)
        throw Error(ErrorCode::InvalidArgument, "encoder: quantizer bins must be positive");
    if (!(range_quant.max > range_quant.min) || !(amp_quant.max > amp_quant.min))
        throw Error(ErrorCode::InvalidArgument, "encoder: quantizer max must exceed min");
    if (!(range_halfwidth > 0.0) || !(amp_halfwidth > 0.0))
        throw Error(ErrorCode::InvalidArgument, "encoder: normalization halfwidths must be positive");
}

bool patch_eligible(const RangeImage& range, int x, int y, const EncoderParams& params) {
    int m = params.margin();
    if (x < m || y < m || x >= range.width - m || y >= range.height - m) return false;
    for (int dy = -m; dy <= m; ++dy)
        for (int dx = -m; dx <= m; ++dx)
            if (!range.is_valid(x + dx, y + dy)) return false;
    return true;
}

InputVector encode_patch(const RangeImage& range, const AmplitudeImage& amp, PixelCoord p,
                         const EncoderParams& params) {
    if (range.width != amp.width || range.height != amp.height)
        throw Error(ErrorCode::DimMismatch, "encode_patch: range/amplitude dimensions disagree");
    if (!patch_eligible(range, p.x, p.y, params))
        throw Error(ErrorCode::Ineligible, "encode_patch: pixel (" + std::to_string(p.x) + "," +
                                               std::to_string(p.y) + ") fails the window policy");

    int m = params.margin();
    double center_r = range.at(p.x, p.y);
    double center_a = amp.at(p.x, p.y);
    double r_scale = 2.0 * params.range_halfwidth;
    double a_scale = 2.0 * params.amp_halfwidth;

    InputVector v;
    v.values.reserve(params.vector_size());
    for (int dy = -m; dy <= m; ++dy)
        for (int dx = -m; dx <= m; ++dx) {
            if (dx == 0 && dy == 0) continue;
            double d = (range.at(p.x + dx, p.y + dy) - center_r) / r_scale;
            v.values.push_back(static_cast<float>(std::clamp(d, -0.5, 0.5)));
        }
    for (int dy = -m; dy <= m; ++dy)
        for (int dx = -m; dx <= m; ++dx) {
            if (dx == 0 && dy == 0) continue;
            double d = (amp.at(p.x + dx, p.y + dy) - center_a) / a_scale;
            v.values.push_back(static_cast<float>(std::clamp(d, -0.5, 0.5)));
        }
    int rb = quant_bin(center_r, params.range_quant);
    for (int i = 0; i < params.range_quant.bins; ++i) v.values.push_back(i == rb ? 1.f : 0.f);
    int ab = quant_bin(center_a, params.amp_quant);
    for (int i = 0; i < params.amp_quant.bins; ++i) v.values.push_back(i == ab ? 1.f : 0.f);
    return v;
}

float make_range_target(const RangeImage& reference, const RangeImage& tof, PixelCoord p) {
    if (reference.width != tof.width || reference.height != tof.height)
        throw Error(ErrorCode::DimMismatch, "make_range_target: dimensions disagree");
    if (!reference.is_valid(p.x, p.y))
        throw Error(ErrorCode::MissingData, "make_range_target: reference missing at pixel");
    if (!tof.is_valid(p.x, p.y))
        throw Error(ErrorCode::MissingData, "make_range_target: tof value missing at pixel");
    float t = reference.at(p.x, p.y) - tof.at(p.x, p.y);
    return std::clamp(t, -kTargetClampMm, kTargetClampMm);
}

SampleSet build_range_dataset(const std::vector<ManifestEntry>& entries,
                              const std::filesystem::path& root, const CalibModel* calib,
                              const EncoderParams& params, uint64_t seed) {
    params.validate();
    int dim = params.vector_size();
    SampleSet set;
    set.input_dim = dim;
    set.kind = LossKind::Euclidean;

    for (const ManifestEntry& entry : entries) {
        RangeImage raw = read_range_image(root / entry.distorted_range);
        AmplitudeImage amp = read_amplitude_image(root / entry.amplitude);
        RangeImage ref = read_range_image(root / entry.reference_range);
        RangeImage tof = calib ? apply_calibration(*calib, raw, amp) : std::move(raw);
        if (ref.width != tof.width || ref.height != tof.height)
            throw Error(ErrorCode::DimMismatch, "build_range_dataset: reference/input dimensions disagree");

        int m = params.margin();
        for (int y = m; y < tof.height - m; ++y)
            for (int x = m; x < tof.width - m; ++x) {
                if (!ref.is_valid(x, y)) continue;
                if (!patch_eligible(tof, x, y, params)) continue;
                InputVector iv = encode_patch(tof, amp, {x, y}, params);
                set.inputs.insert(set.inputs.end(), iv.values.begin(), iv.values.end());
                set.targets.push_back(make_range_target(ref, tof, {x, y}));
            }
    }

    // Deterministic shuffle of whole records.
    size_t n = set.targets.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    Rng rng(seed);
    for (size_t i = n; i-- > 1;) {
        size_t j = rng.next_u64() % (i + 1);
        std::swap(order[i], order[j]);
    }
    SampleSet shuffled;
    shuffled.input_dim = dim;
    shuffled.kind = LossKind::Euclidean;
    shuffled.inputs.resize(set.inputs.size());
    shuffled.targets.resize(n);
    for (size_t i = 0; i < n; ++i) {
        std::memcpy(shuffled.inputs.data() + i * dim, set.inputs.data() + order[i] * dim,
                    sizeof(float) * dim);
        shuffled.targets[i] = set.targets[order[i]];
    }
    return shuffled;
}

double amplitude_percentile(const std::vector<AmplitudeImage>& images, double percentile) {
    std::vector<float> pool;
    for (const AmplitudeImage& img : images) pool.insert(pool.end(), img.data.begin(), img.data.end());
    if (pool.empty()) throw Error(ErrorCode::MissingData, "amplitude_percentile: no values");
    std::sort(pool.begin(), pool.end());
    double rank = percentile / 100.0 * static_cast<double>(pool.size());
    size_t idx = rank <= 1.0 ? 0 : std::min(pool.size() - 1, static_cast<size_t>(std::ceil(rank)) - 1);
    return pool[idx];
}

void fit_amplitude_window(EncoderParams& params, const std::vector<AmplitudeImage>& images) {
    double hi = amplitude_percentile(images, 99.5);
    if (!(hi > 0.0)) hi = 1.0;
    params.amp_quant = QuantSpec{0.0, hi, params.amp_quant.bins};
    params.amp_halfwidth = hi / 2.0;
}

namespace {
constexpr char kSampleMagic[4] = {'T', 'F', 'S', '1'};
}

void save_samples(const SampleSet& samples, const std::filesystem::path& path) {
    uint32_t stride = static_cast<uint32_t>(samples.input_dim) + 2;
    std::vector<uint8_t> bytes;
    bytes.insert(bytes.end(), kSampleMagic, kSampleMagic + 4);
    auto put_u32 = [&bytes](uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
    };
    auto put_f32 = [&](float v) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_u32(bits);
    };
    size_t n = samples.size();
    put_u32(static_cast<uint32_t>(n));
    put_u32(stride);
    for (size_t i = 0; i < n; ++i) {
        const float* in = samples.inputs.data() + i * samples.input_dim;
        for (int k = 0; k < samples.input_dim; ++k) put_f32(in[k]);
        if (samples.kind == LossKind::Euclidean) {
            put_f32(samples.targets[i]);
            put_f32(0.f);
        } else {
            put_f32(static_cast<float>(samples.labels[i]));
            put_f32(1.f);
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "write failure on " + path.string());
}

SampleSet load_samples(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 12) throw Error(ErrorCode::Truncated, path.string() + ": shorter than header");
    if (std::memcmp(bytes.data(), kSampleMagic, 4) != 0)
        throw Error(ErrorCode::BadMagic, path.string() + ": bad sample-cache magic");
    auto get_u32 = [&bytes](size_t off) {
        return static_cast<uint32_t>(bytes[off]) | (static_cast<uint32_t>(bytes[off + 1]) << 8) |
               (static_cast<uint32_t>(bytes[off + 2]) << 16) | (static_cast<uint32_t>(bytes[off + 3]) << 24);
    };
    uint32_t n = get_u32(4);
    uint32_t stride = get_u32(8);
    if (stride < 3) throw Error(ErrorCode::Corruption, path.string() + ": implausible record stride");
    if (bytes.size() != 12 + static_cast<size_t>(n) * stride * 4)
        throw Error(ErrorCode::Truncated, path.string() + ": payload size mismatch");

    auto get_f32 = [&bytes](size_t off) {
        uint32_t bits = static_cast<uint32_t>(bytes[off]) | (static_cast<uint32_t>(bytes[off + 1]) << 8) |
                        (static_cast<uint32_t>(bytes[off + 2]) << 16) |
                        (static_cast<uint32_t>(bytes[off + 3]) << 24);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    };
    SampleSet set;
    set.input_dim = static_cast<int>(stride) - 2;
    bool any_label = false;
    for (uint32_t i = 0; i < n; ++i) {
        size_t base = 12 + static_cast<size_t>(i) * stride * 4;
        for (uint32_t k = 0; k + 2 < stride; ++k) set.inputs.push_back(get_f32(base + k * 4));
        float target = get_f32(base + (stride - 2) * 4);
        float kind = get_f32(base + (stride - 1) * 4);
        if (kind != 0.f) {
            any_label = true;
            set.labels.push_back(static_cast<int32_t>(target));
        } else {
            set.targets.push_back(target);
        }
    }
    if (any_label && !set.targets.empty())
        throw Error(ErrorCode::Corruption, path.string() + ": mixed sample kinds in one cache");
    set.kind = any_label ? LossKind::CrossEntropy : LossKind::Euclidean;
    return set;
}

}  // namespace tofclean
