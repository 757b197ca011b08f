#include "tofclean/image.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace tofclean {

namespace {

constexpr char kMagic[4] = {'T', 'F', 'D', '1'};
constexpr uint32_t kMaxDim = 1u << 20;
constexpr uint64_t kMaxPixels = 1ull << 28;

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<uint8_t>((v >> 24) & 0xff));
}

uint32_t get_u32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

void put_f32(std::vector<uint8_t>& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

float get_f32(const uint8_t* p) {
    uint32_t bits = get_u32(p);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

std::vector<uint8_t> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw Error(ErrorCode::Io, "read failure on " + path.string());
    return bytes;
}

void write_all(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "write failure on " + path.string());
}

}  // namespace

RangeImage RangeImage::constant(int width, int height, float value) {
    RangeImage img;
    img.width = width;
    img.height = height;
    img.data.assign(static_cast<size_t>(width) * height, value);
    img.valid.assign(static_cast<size_t>(width) * height, 1);
    return img;
}

void RangeImage::validate() const {
    size_t n = static_cast<size_t>(width) * height;
    if (width < 0 || height < 0 || data.size() != n || valid.size() != n)
        throw Error(ErrorCode::InvalidArgument, "range image: size fields disagree with buffers");
    for (size_t i = 0; i < n; ++i) {
        if (valid[i] && (!std::isfinite(data[i]) || data[i] < 0.f))
            throw Error(ErrorCode::InvalidArgument,
                        "range image: valid pixel " + std::to_string(i) + " is not finite and >= 0");
    }
}

AmplitudeImage AmplitudeImage::constant(int width, int height, float value) {
    AmplitudeImage img;
    img.width = width;
    img.height = height;
    img.data.assign(static_cast<size_t>(width) * height, value);
    return img;
}

void AmplitudeImage::validate() const {
    size_t n = static_cast<size_t>(width) * height;
    if (width < 0 || height < 0 || data.size() != n)
        throw Error(ErrorCode::InvalidArgument, "amplitude image: size fields disagree with buffer");
    for (size_t i = 0; i < n; ++i) {
        if (!std::isfinite(data[i]) || data[i] < 0.f)
            throw Error(ErrorCode::InvalidArgument,
                        "amplitude image: pixel " + std::to_string(i) + " is not finite and >= 0");
    }
}

ImageFile read_image(const std::filesystem::path& path) {
    std::vector<uint8_t> bytes = read_all(path);
    if (bytes.size() < 14) throw Error(ErrorCode::Truncated, path.string() + ": shorter than header");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw Error(ErrorCode::BadMagic, path.string() + ": bad magic bytes");
    uint32_t w = get_u32(bytes.data() + 4);
    uint32_t h = get_u32(bytes.data() + 8);
    uint8_t tag = bytes[12];
    uint8_t mask_flag = bytes[13];
    if (w > kMaxDim || h > kMaxDim || static_cast<uint64_t>(w) * h > kMaxPixels)
        throw Error(ErrorCode::DimOverflow, path.string() + ": implausible dimensions");
    if (tag > 3) throw Error(ErrorCode::Corruption, path.string() + ": unknown channel tag");
    if (mask_flag > 1) throw Error(ErrorCode::Corruption, path.string() + ": bad mask flag");

    size_t n = static_cast<size_t>(w) * h;
    size_t expected = 14 + n * 4 + (mask_flag ? n : 0);
    if (bytes.size() != expected)
        throw Error(ErrorCode::Truncated, path.string() + ": payload size mismatch (expected " +
                                              std::to_string(expected) + " bytes, got " +
                                              std::to_string(bytes.size()) + ")");

    ImageFile img;
    img.channel = static_cast<Channel>(tag);
    img.width = static_cast<int>(w);
    img.height = static_cast<int>(h);
    img.data.resize(n);
    for (size_t i = 0; i < n; ++i) img.data[i] = get_f32(bytes.data() + 14 + i * 4);
    img.has_mask = mask_flag != 0;
    if (img.has_mask) img.mask.assign(bytes.begin() + 14 + static_cast<long>(n) * 4, bytes.end());
    return img;
}

void write_image(const ImageFile& img, const std::filesystem::path& path) {
    size_t n = static_cast<size_t>(img.width) * img.height;
    if (img.width < 0 || img.height < 0 || img.data.size() != n)
        throw Error(ErrorCode::InvalidArgument, "image: size fields disagree with buffer");
    if (img.has_mask && img.mask.size() != n)
        throw Error(ErrorCode::InvalidArgument, "image: mask size disagrees with dimensions");

    std::vector<uint8_t> bytes;
    bytes.reserve(14 + n * 5);
    bytes.insert(bytes.end(), kMagic, kMagic + 4);
    put_u32(bytes, static_cast<uint32_t>(img.width));
    put_u32(bytes, static_cast<uint32_t>(img.height));
    bytes.push_back(static_cast<uint8_t>(img.channel));
    bytes.push_back(img.has_mask ? 1 : 0);
    for (float v : img.data) put_f32(bytes, v);
    if (img.has_mask)
        for (uint8_t m : img.mask) bytes.push_back(m ? 1 : 0);
    write_all(path, bytes);
}

RangeImage read_range_image(const std::filesystem::path& path) {
    ImageFile f = read_image(path);
    if (f.channel != Channel::Range)
        throw Error(ErrorCode::Corruption, path.string() + ": expected range channel");
    RangeImage img;
    img.width = f.width;
    img.height = f.height;
    img.data = std::move(f.data);
    img.valid = f.has_mask ? std::move(f.mask)
                           : std::vector<uint8_t>(static_cast<size_t>(f.width) * f.height, 1);
    return img;
}

void write_range_image(const RangeImage& img, const std::filesystem::path& path) {
    img.validate();
    ImageFile f;
    f.channel = Channel::Range;
    f.width = img.width;
    f.height = img.height;
    f.data = img.data;
    f.has_mask = true;
    f.mask = img.valid;
    write_image(f, path);
}

AmplitudeImage read_amplitude_image(const std::filesystem::path& path) {
    ImageFile f = read_image(path);
    if (f.channel != Channel::Amplitude)
        throw Error(ErrorCode::Corruption, path.string() + ": expected amplitude channel");
    AmplitudeImage img;
    img.width = f.width;
    img.height = f.height;
    img.data = std::move(f.data);
    return img;
}

void write_amplitude_image(const AmplitudeImage& img, const std::filesystem::path& path) {
    img.validate();
    ImageFile f;
    f.channel = Channel::Amplitude;
    f.width = img.width;
    f.height = img.height;
    f.data = img.data;
    f.has_mask = false;
    write_image(f, path);
}

}  // namespace tofclean
