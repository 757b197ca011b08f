#include "tofclean/calib.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace tofclean {

namespace {

constexpr char kMagic[4] = {'T', 'F', 'C', '1'};

// Feature scaling used inside the per-pixel solve. The raw Gram matrix over
// (range, amplitude, 1) is badly scaled (ranges are O(300), amplitudes O(1)),
// so we solve in a centered/scaled basis and map the coefficients back.
constexpr double kRangeCenter = 275.0, kRangeScale = 125.0;
constexpr double kAmpCenter = 1.5, kAmpScale = 1.5;

// Solves the 3x3 system M x = rhs by Gaussian elimination with partial
// pivoting. Returns false when the pivot collapses (singular system).
bool solve3(double m[3][3], double rhs[3], double out[3]) {
    int piv[3] = {0, 1, 2};
    for (int col = 0; col < 3; ++col) {
        int best = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::fabs(m[piv[r]][col]) > std::fabs(m[piv[best]][col])) best = r;
        std::swap(piv[col], piv[best]);
        double p = m[piv[col]][col];
        if (std::fabs(p) < 1e-12) return false;
        for (int r = col + 1; r < 3; ++r) {
            double f = m[piv[r]][col] / p;
            for (int c = col; c < 3; ++c) m[piv[r]][c] -= f * m[piv[col]][c];
            rhs[piv[r]] -= f * rhs[piv[col]];
        }
    }
    for (int col = 3; col-- > 0;) {
        double acc = rhs[piv[col]];
        for (int c = col + 1; c < 3; ++c) acc -= m[piv[col]][c] * out[c];
        out[col] = acc / m[piv[col]][col];
    }
    return true;
}

}  // namespace

CalibModel CalibModel::identity(int width, int height) {
    CalibModel m;
    m.width = width;
    m.height = height;
    size_t n = static_cast<size_t>(width) * height;
    m.a.assign(n, 1.0);
    m.b.assign(n, 0.0);
    m.c.assign(n, 0.0);
    return m;
}

void CalibModel::validate() const {
    size_t n = static_cast<size_t>(width) * height;
    if (width <= 0 || height <= 0 || a.size() != n || b.size() != n || c.size() != n)
        throw Error(ErrorCode::InvalidArgument, "calib model: size fields disagree with buffers");
    for (size_t i = 0; i < n; ++i)
        if (!std::isfinite(a[i]) || !std::isfinite(b[i]) || !std::isfinite(c[i]))
            throw Error(ErrorCode::InvalidArgument, "calib model: non-finite coefficient");
}

CalibAccumulator::CalibAccumulator(int width, int height) : width_(width), height_(height) {
    if (width <= 0 || height <= 0)
        throw Error(ErrorCode::InvalidArgument, "calib accumulator: dimensions must be positive");
    sums_.resize(static_cast<size_t>(width) * height);
}

void CalibAccumulator::add_observation(int x, int y, double range, double amplitude, double truth) {
    Sums& s = sums_[static_cast<size_t>(y) * width_ + x];
    double r = (range - kRangeCenter) / kRangeScale;
    double a = (amplitude - kAmpCenter) / kAmpScale;
    double t = truth;
    s.rr += r * r;
    s.ra += r * a;
    s.r += r;
    s.aa += a * a;
    s.a += a;
    s.n += 1.0;
    s.yr += t * r;
    s.ya += t * a;
    s.y += t;
}

void CalibAccumulator::add_frame(const RangeImage& observed, const AmplitudeImage& amplitude,
                                 const RangeImage& truth) {
    if (observed.width != width_ || observed.height != height_ || amplitude.width != width_ ||
        amplitude.height != height_ || truth.width != width_ || truth.height != height_)
        throw Error(ErrorCode::DimMismatch, "calib accumulator: frame dimensions disagree");
    for (int y = 0; y < height_; ++y)
        for (int x = 0; x < width_; ++x) {
            size_t i = observed.index(x, y);
            if (!observed.valid[i] || !truth.valid[i]) continue;
            add_observation(x, y, observed.data[i], amplitude.data[i], truth.data[i]);
        }
}

CalibModel CalibAccumulator::fit() const {
    CalibModel model;
    model.width = width_;
    model.height = height_;
    size_t n = sums_.size();
    model.a.resize(n);
    model.b.resize(n);
    model.c.resize(n);

    for (int y = 0; y < height_; ++y)
        for (int x = 0; x < width_; ++x) {
            const Sums& s = sums_[static_cast<size_t>(y) * width_ + x];
            std::string pixel = "(" + std::to_string(x) + "," + std::to_string(y) + ")";
            if (s.n < 3.0)
                throw Error(ErrorCode::Underdetermined,
                            "calibration fit: pixel " + pixel + " has fewer than 3 observations");
            double m[3][3] = {{s.rr, s.ra, s.r}, {s.ra, s.aa, s.a}, {s.r, s.a, s.n}};
            double rhs[3] = {s.yr, s.ya, s.y};
            double coef[3];
            if (!solve3(m, rhs, coef))
                throw Error(ErrorCode::Underdetermined,
                            "calibration fit: pixel " + pixel + " observations are collinear");
            // Undo the feature scaling: truth = a'*r' + b'*A' + c' with
            // r' = (r - cr)/sr, A' = (A - ca)/sa.
            double a = coef[0] / kRangeScale;
            double b = coef[1] / kAmpScale;
            double c = coef[2] - coef[0] * kRangeCenter / kRangeScale - coef[1] * kAmpCenter / kAmpScale;
            size_t i = static_cast<size_t>(y) * width_ + x;
            model.a[i] = a;
            model.b[i] = b;
            model.c[i] = c;
        }
    model.validate();
    return model;
}

CalibModel fit_calibration(const std::vector<CalibFrame>& frames) {
    if (frames.empty()) throw Error(ErrorCode::MissingData, "calibration fit: no frames");
    CalibAccumulator acc(frames.front().observed.width, frames.front().observed.height);
    for (const CalibFrame& f : frames) acc.add_frame(f.observed, f.amplitude, f.truth);
    return acc.fit();
}

RangeImage apply_calibration(const CalibModel& model, const RangeImage& range,
                             const AmplitudeImage& amplitude) {
    if (range.width != model.width || range.height != model.height ||
        amplitude.width != model.width || amplitude.height != model.height)
        throw Error(ErrorCode::DimMismatch, "apply_calibration: dimensions disagree with model");
    RangeImage out = range;
    size_t n = range.data.size();
    for (size_t i = 0; i < n; ++i) {
        double v = model.a[i] * range.data[i] + model.b[i] * amplitude.data[i] + model.c[i];
        out.data[i] = static_cast<float>(v);
    }
    return out;
}

void save_calib(const CalibModel& model, const std::filesystem::path& path) {
    model.validate();
    std::vector<uint8_t> bytes;
    bytes.insert(bytes.end(), kMagic, kMagic + 4);
    auto put_u32 = [&bytes](uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
    };
    auto put_f32 = [&](float v) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_u32(bits);
    };
    put_u32(static_cast<uint32_t>(model.width));
    put_u32(static_cast<uint32_t>(model.height));
    size_t n = model.a.size();
    for (size_t i = 0; i < n; ++i) {
        put_f32(static_cast<float>(model.a[i]));
        put_f32(static_cast<float>(model.b[i]));
        put_f32(static_cast<float>(model.c[i]));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "write failure on " + path.string());
}

CalibModel load_calib(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 12) throw Error(ErrorCode::Truncated, path.string() + ": shorter than header");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw Error(ErrorCode::BadMagic, path.string() + ": bad calib magic");
    auto get_u32 = [&bytes](size_t off) {
        return static_cast<uint32_t>(bytes[off]) | (static_cast<uint32_t>(bytes[off + 1]) << 8) |
               (static_cast<uint32_t>(bytes[off + 2]) << 16) | (static_cast<uint32_t>(bytes[off + 3]) << 24);
    };
    uint32_t w = get_u32(4), h = get_u32(8);
    if (w == 0 || h == 0 || w > (1u << 20) || h > (1u << 20) || static_cast<uint64_t>(w) * h > (1ull << 28))
        throw Error(ErrorCode::DimOverflow, path.string() + ": implausible dimensions");
    size_t n = static_cast<size_t>(w) * h;
    if (bytes.size() != 12 + n * 12)
        throw Error(ErrorCode::Truncated, path.string() + ": payload size mismatch");

    CalibModel model;
    model.width = static_cast<int>(w);
    model.height = static_cast<int>(h);
    model.a.resize(n);
    model.b.resize(n);
    model.c.resize(n);
    for (size_t i = 0; i < n; ++i) {
        auto get_f32 = [&bytes](size_t off) {
            uint32_t bits = static_cast<uint32_t>(bytes[off]) | (static_cast<uint32_t>(bytes[off + 1]) << 8) |
                            (static_cast<uint32_t>(bytes[off + 2]) << 16) |
                            (static_cast<uint32_t>(bytes[off + 3]) << 24);
            float v;
            std::memcpy(&v, &bits, 4);
            return v;
        };
        model.a[i] = get_f32(12 + i * 12);
        model.b[i] = get_f32(12 + i * 12 + 4);
        model.c[i] = get_f32(12 + i * 12 + 8);
    }
    return model;
}

}  // namespace tofclean
