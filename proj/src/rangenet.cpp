#include "tofclean/rangenet.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace tofclean {

namespace {

nlohmann::json encoder_to_json(const EncoderParams& p) {
    return {
        {"patch", p.patch},
        {"range_halfwidth", p.range_halfwidth},
        {"amp_halfwidth", p.amp_halfwidth},
        {"range_quant", {{"min", p.range_quant.min}, {"max", p.range_quant.max}, {"bins", p.range_quant.bins}}},
        {"amp_quant", {{"min", p.amp_quant.min}, {"max", p.amp_quant.max}, {"bins", p.amp_quant.bins}}},
    };
}

EncoderParams encoder_from_json(const nlohmann::json& j) {
    EncoderParams p;
    p.patch = j.at("patch").get<int>();
    p.range_halfwidth = j.at("range_halfwidth").get<double>();
    p.amp_halfwidth = j.at("amp_halfwidth").get<double>();
    p.range_quant = {j.at("range_quant").at("min").get<double>(), j.at("range_quant").at("max").get<double>(),
                     j.at("range_quant").at("bins").get<int>()};
    p.amp_quant = {j.at("amp_quant").at("min").get<double>(), j.at("amp_quant").at("max").get<double>(),
                   j.at("amp_quant").at("bins").get<int>()};
    p.validate();
    return p;
}

}  // namespace

void RangeRecoveryModel::validate() const {
    encoder.validate();
    net.validate();
    if (net.input_size() != encoder.vector_size())
        throw Error(ErrorCode::DimMismatch, "range model: net input size != encoder vector size");
    if (net.output_size() != 1 || net.head != Head::Linear)
        throw Error(ErrorCode::InvalidArgument, "range model: expected a scalar linear head");
}

MlpModel make_range_net(int input_size, uint64_t seed) {
    return MlpModel::init({input_size, 40, 10, 10, 1}, Head::Linear, seed);
}

MlpModel make_boundary_net(int input_size, uint64_t seed) {
    return MlpModel::init({input_size, 40, 20, 2}, Head::Softmax2, seed);
}

RangeTrainResult train_range_nn(const std::vector<ManifestEntry>& entries,
                                const std::filesystem::path& root, const CalibModel* calib,
                                const EncoderParams& encoder, const TrainConfig& config) {
    SampleSet samples = build_range_dataset(entries, root, calib, encoder,
                                            derive_seed(config.seed, "range-dataset"));
    if (samples.size() == 0)
        throw Error(ErrorCode::MissingData, "train_range_nn: no eligible training pixels");

    RangeTrainResult result;
    result.sample_count = samples.size();
    result.model.encoder = encoder;
    result.model.net = make_range_net(encoder.vector_size(), derive_seed(config.seed, "range-init"));
    TrainConfig cfg = config;
    cfg.seed = derive_seed(config.seed, "range-train");
    result.log = train(result.model.net, samples, cfg);
    return result;
}

RangeImage recover_range(const RangeRecoveryModel& model, const RangeImage& range,
                         const AmplitudeImage& amplitude) {
    model.validate();
    if (range.width != amplitude.width || range.height != amplitude.height)
        throw Error(ErrorCode::DimMismatch, "recover_range: range/amplitude dimensions disagree");

    RangeImage out = range;
    std::fill(out.valid.begin(), out.valid.end(), 0);
    MlpScratch scratch;
    int m = model.encoder.margin();
    for (int y = m; y < range.height - m; ++y)
        for (int x = m; x < range.width - m; ++x) {
            if (!patch_eligible(range, x, y, model.encoder)) continue;
            InputVector iv = encode_patch(range, amplitude, {x, y}, model.encoder);
            auto pred = forward(model.net, iv.full(), scratch);
            double f = std::clamp(pred[0], -static_cast<double>(kTargetClampMm),
                                  static_cast<double>(kTargetClampMm));
            size_t i = range.index(x, y);
            out.data[i] = static_cast<float>(range.data[i] + f);
            out.valid[i] = 1;
        }
    return out;
}

namespace {
constexpr char kBundleMagic[4] = {'T', 'F', 'B', '1'};
}

void save_model_bundle(const EncoderParams& encoder, const MlpModel& net, const std::string& role,
                       const std::filesystem::path& path) {
    nlohmann::json j;
    j["role"] = role;
    j["encoder"] = encoder_to_json(encoder);
    std::string header = j.dump();
    std::vector<uint8_t> payload = serialize_model(net);

    std::vector<uint8_t> bytes;
    bytes.insert(bytes.end(), kBundleMagic, kBundleMagic + 4);
    uint32_t len = static_cast<uint32_t>(header.size());
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<uint8_t>((len >> (8 * i)) & 0xff));
    bytes.insert(bytes.end(), header.begin(), header.end());
    bytes.insert(bytes.end(), payload.begin(), payload.end());

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "write failure on " + path.string());
}

ModelBundle load_model_bundle(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kBundleMagic, 4) != 0)
        throw Error(ErrorCode::BadMagic, path.string() + ": bad bundle magic");
    uint32_t len = static_cast<uint32_t>(bytes[4]) | (static_cast<uint32_t>(bytes[5]) << 8) |
                   (static_cast<uint32_t>(bytes[6]) << 16) | (static_cast<uint32_t>(bytes[7]) << 24);
    if (bytes.size() < 8 + static_cast<size_t>(len))
        throw Error(ErrorCode::Truncated, path.string() + ": truncated bundle header");

    ModelBundle bundle;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + len);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Corruption, path.string() + ": bad bundle JSON: " + e.what());
    }
    bundle.role = j.value("role", "");
    bundle.encoder = encoder_from_json(j.at("encoder"));
    bundle.net = deserialize_model({bytes.data() + 8 + len, bytes.size() - 8 - len}, path.string());
    return bundle;
}

void save_range_model(const RangeRecoveryModel& model, const std::filesystem::path& path) {
    model.validate();
    save_model_bundle(model.encoder, model.net, "range-recovery", path);
}

RangeRecoveryModel load_range_model(const std::filesystem::path& path) {
    ModelBundle bundle = load_model_bundle(path);
    if (bundle.role != "range-recovery")
        throw Error(ErrorCode::Corruption, path.string() + ": bundle role is not range-recovery");
    RangeRecoveryModel model;
    model.encoder = bundle.encoder;
    model.net = std::move(bundle.net);
    model.validate();
    return model;
}

}  // namespace tofclean
