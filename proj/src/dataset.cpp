#include "tofclean/dataset.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "tofclean/common.hpp"

namespace tofclean {

namespace {

nlohmann::json entry_to_json(const ManifestEntry& e) {
    return {{"scene", e.scene},
            {"distorted_range", e.distorted_range},
            {"amplitude", e.amplitude},
            {"reference_range", e.reference_range}};
}

ManifestEntry entry_from_json(const nlohmann::json& j) {
    ManifestEntry e;
    e.scene = j.value("scene", "");
    e.distorted_range = j.at("distorted_range").get<std::string>();
    e.amplitude = j.at("amplitude").get<std::string>();
    e.reference_range = j.at("reference_range").get<std::string>();
    return e;
}

}  // namespace

DatasetManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Corruption, path.string() + ": bad manifest JSON: " + e.what());
    }
    DatasetManifest m;
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    m.seed = j.value("seed", uint64_t{0});
    for (const auto& je : j.value("train", nlohmann::json::array())) m.train.push_back(entry_from_json(je));
    for (const auto& je : j.value("test", nlohmann::json::array())) m.test.push_back(entry_from_json(je));
    m.root = path.parent_path();
    return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    nlohmann::json j;
    j["width"] = manifest.width;
    j["height"] = manifest.height;
    j["seed"] = manifest.seed;
    j["train"] = nlohmann::json::array();
    for (const ManifestEntry& e : manifest.train) j["train"].push_back(entry_to_json(e));
    j["test"] = nlohmann::json::array();
    for (const ManifestEntry& e : manifest.test) j["test"].push_back(entry_to_json(e));

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    out << j.dump(2) << "\n";
    if (!out) throw Error(ErrorCode::Io, "write failure on " + path.string());
}

}  // namespace tofclean
