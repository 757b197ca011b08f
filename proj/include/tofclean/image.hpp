#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "tofclean/common.hpp"

namespace tofclean {

struct PixelCoord {
    int x = 0;
    int y = 0;
};

/// Channel tag stored in byte 12 of the image file header.
enum class Channel : uint8_t {
    Range = 0,            // millimeters
    Amplitude = 1,        // unitless signal strength
    EdgeBinary = 2,       // 0/1
    OrientationGroup = 3, // 0..3, meaningful where the mask is set
};

/// 2-D float32 range grid in millimeters with a per-pixel validity mask.
/// Invalid pixels may carry a value (e.g. pass-through estimates) but no
/// consumer may trust it without opting in.
struct RangeImage {
    int width = 0;
    int height = 0;
    std::vector<float> data;     // row-major
    std::vector<uint8_t> valid;  // 1 = usable

    static RangeImage constant(int width, int height, float value);

    size_t index(int x, int y) const { return static_cast<size_t>(y) * width + x; }
    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
    float at(int x, int y) const { return data[index(x, y)]; }
    float& at(int x, int y) { return data[index(x, y)]; }
    bool is_valid(int x, int y) const { return valid[index(x, y)] != 0; }

    /// Throws Error(InvalidArgument) if sizes disagree or a valid pixel
    /// holds a non-finite or negative value.
    void validate() const;

    bool operator==(const RangeImage&) const = default;
};

/// 2-D float32 amplitude grid (returning-signal strength, unitless).
struct AmplitudeImage {
    int width = 0;
    int height = 0;
    std::vector<float> data;

    static AmplitudeImage constant(int width, int height, float value);

    size_t index(int x, int y) const { return static_cast<size_t>(y) * width + x; }
    float at(int x, int y) const { return data[index(x, y)]; }
    float& at(int x, int y) { return data[index(x, y)]; }

    void validate() const;

    bool operator==(const AmplitudeImage&) const = default;
};

/// Raw decoded contents of a "TFD1" image file. Layout:
///   bytes 0-3   magic "TFD1"
///   bytes 4-7   u32 LE width
///   bytes 8-11  u32 LE height
///   byte  12    channel tag (Channel)
///   byte  13    mask flag (0/1)
///   payload     width*height float32 LE, row-major
///   mask        width*height bytes (0/1), present iff mask flag = 1
struct ImageFile {
    Channel channel = Channel::Range;
    int width = 0;
    int height = 0;
    std::vector<float> data;
    bool has_mask = false;
    std::vector<uint8_t> mask;

    bool operator==(const ImageFile&) const = default;
};

ImageFile read_image(const std::filesystem::path& path);
void write_image(const ImageFile& img, const std::filesystem::path& path);

RangeImage read_range_image(const std::filesystem::path& path);
void write_range_image(const RangeImage& img, const std::filesystem::path& path);

AmplitudeImage read_amplitude_image(const std::filesystem::path& path);
void write_amplitude_image(const AmplitudeImage& img, const std::filesystem::path& path);

}  // namespace tofclean
