#pragma once

#include <unistd.h>

#include <filesystem>
#include <string>

#include "tofclean/common.hpp"
#include "tofclean/image.hpp"

namespace testutil {

/// Unique scratch directory under the build tree, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("tofclean_test_" + tag + "_" + std::to_string(++counter) + "_" +
                 std::to_string(static_cast<unsigned>(::getpid())));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline tofclean::RangeImage random_range_image(int w, int h, tofclean::Rng& rng,
                                               double missing_fraction = 0.0) {
    tofclean::RangeImage img = tofclean::RangeImage::constant(w, h, 0.f);
    for (size_t i = 0; i < img.data.size(); ++i) {
        img.data[i] = static_cast<float>(rng.uniform(150.0, 400.0));
        if (missing_fraction > 0.0 && rng.uniform() < missing_fraction) img.valid[i] = 0;
    }
    return img;
}

inline tofclean::AmplitudeImage random_amplitude_image(int w, int h, tofclean::Rng& rng) {
    tofclean::AmplitudeImage img = tofclean::AmplitudeImage::constant(w, h, 0.f);
    for (float& v : img.data) v = static_cast<float>(rng.uniform(0.05, 3.0));
    return img;
}

}  // namespace testutil
