#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tofclean {

/// One captured view of one scene: the raw (distorted) range image, its
/// amplitude image, and the fused reference range image used as label.
/// Paths are relative to the manifest's directory.
struct ManifestEntry {
    std::string scene;            // scene description JSON
    std::string distorted_range;  // raw ToF-analog range image
    std::string amplitude;
    std::string reference_range;  // fused reference with validity mask
};

struct DatasetManifest {
    int width = 0;
    int height = 0;
    uint64_t seed = 0;
    std::vector<ManifestEntry> train;
    std::vector<ManifestEntry> test;

    /// Directory the entry paths are relative to (set on load/save).
    std::filesystem::path root;

    std::filesystem::path resolve(const std::string& rel) const { return root / rel; }
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

}  // namespace tofclean
