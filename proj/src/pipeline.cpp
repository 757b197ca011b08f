#include "tofclean/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "tofclean/metrics.hpp"
#include "tofclean/rangenet.hpp"

namespace tofclean {

namespace fs = std::filesystem;

namespace {

std::string zero_pad(int value, int digits) {
    std::string s = std::to_string(value);
    while (static_cast<int>(s.size()) < digits) s.insert(s.begin(), '0');
    return s;
}

void write_json_file(const nlohmann::json& j, const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    out << j.dump(2) << "\n";
    if (!out) throw Error(ErrorCode::Io, "write failure on " + path.string());
}

nlohmann::json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    try {
        nlohmann::json j;
        in >> j;
        return j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Corruption, path.string() + ": bad JSON: " + e.what());
    }
}

Scene random_scene(const PipelineConfig::Simulate& sim, Rng& rng) {
    Scene scene;
    scene.width = sim.width;
    scene.height = sim.height;
    scene.platform_depth = rng.uniform(sim.platform_depth_min, sim.platform_depth_max);
    scene.platform_reflectivity = rng.uniform(0.4, 0.9);
    int count = rng.uniform_int(sim.objects_min, sim.objects_max);
    for (int i = 0; i < count; ++i) {
        SceneObject o;
        o.half_w = rng.uniform(4.0, 12.0);
        o.half_h = rng.uniform(4.0, 12.0);
        double mx = sim.border_margin + o.half_w;
        double my = sim.border_margin + o.half_h;
        o.center_x = rng.uniform(mx, sim.width - 1 - mx);
        o.center_y = rng.uniform(my, sim.height - 1 - my);
        o.top_depth = scene.platform_depth - rng.uniform(sim.relief_min, sim.relief_max);
        o.reflectivity = rng.uniform(0.3, 1.0);
        scene.objects.push_back(o);
    }
    scene.validate();
    return scene;
}

SystematicField systematic_field_for(const PipelineConfig& config) {
    return make_systematic_field(config.simulate.width, config.simulate.height,
                                 config.simulate.systematic.gain_spread,
                                 config.simulate.systematic.amp_coupling,
                                 config.simulate.systematic.offset_spread,
                                 derive_seed(config.seed, "systematic-field"));
}

EncoderParams finalized_encoder(const PipelineConfig& config, const DatasetManifest& manifest) {
    std::vector<AmplitudeImage> amps;
    for (const ManifestEntry& e : manifest.train)
        amps.push_back(read_amplitude_image(manifest.resolve(e.amplitude)));
    EncoderParams params = config.encoder;
    fit_amplitude_window(params, amps);
    return params;
}

CalibModel load_calib_or_throw(const PipelineConfig& config) {
    fs::path path = fs::path(config.paths.models) / "calib.tfc";
    if (!fs::exists(path))
        throw Error(ErrorCode::MissingData, "calibration model not found at " + path.string() +
                                                "; run fit-calib first");
    return load_calib(path);
}

void write_loss_csv(const TrainLog& log, const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    out << "epoch,mean_loss\n";
    for (size_t e = 0; e < log.epoch_loss.size(); ++e) out << e + 1 << "," << log.epoch_loss[e] << "\n";
}

struct Timer {
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
    double ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    }
};

}  // namespace

void PipelineConfig::validate() const {
    if (simulate.width <= 0 || simulate.height <= 0)
        throw Error(ErrorCode::InvalidArgument, "config: image dimensions must be positive");
    if (simulate.train_scenes < 0 || simulate.test_scenes < 0)
        throw Error(ErrorCode::InvalidArgument, "config: scene counts must be >= 0");
    if (simulate.objects_min < 0 || simulate.objects_max < simulate.objects_min)
        throw Error(ErrorCode::InvalidArgument, "config: bad object count range");
    if (geodesic.k < 1) throw Error(ErrorCode::InvalidArgument, "config: geodesic k must be >= 1");
    if (!(geodesic.sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "config: geodesic sigma must be > 0");
    if (!(geodesic.step_cost > 0.0))
        throw Error(ErrorCode::InvalidArgument, "config: geodesic step cost must be > 0");
    if (eval.thresholds_mm.empty())
        throw Error(ErrorCode::InvalidArgument, "config: eval thresholds must be nonempty");
    encoder.validate();
    simulate.distortion.validate();
    train_range.validate();
    train_boundary.validate();
}

nlohmann::json config_to_json(const PipelineConfig& c) {
    nlohmann::json j;
    j["seed"] = c.seed;
    j["paths"] = {{"dataset", c.paths.dataset}, {"models", c.paths.models}, {"output", c.paths.output}};
    j["simulate"] = {
        {"width", c.simulate.width},
        {"height", c.simulate.height},
        {"train_scenes", c.simulate.train_scenes},
        {"test_scenes", c.simulate.test_scenes},
        {"objects_min", c.simulate.objects_min},
        {"objects_max", c.simulate.objects_max},
        {"platform_depth_min", c.simulate.platform_depth_min},
        {"platform_depth_max", c.simulate.platform_depth_max},
        {"relief_min", c.simulate.relief_min},
        {"relief_max", c.simulate.relief_max},
        {"border_margin", c.simulate.border_margin},
        {"distortion",
         {{"psf_radius", c.simulate.distortion.psf_radius},
          {"overshoot_gain", c.simulate.distortion.overshoot_gain},
          {"overshoot_radius", c.simulate.distortion.overshoot_radius},
          {"noise_sigma", c.simulate.distortion.noise_sigma}}},
        {"scans",
         {{"count", c.simulate.scans.count},
          {"jitter_sigma", c.simulate.scans.jitter_sigma},
          {"occlusion_sites", c.simulate.scans.occlusion_sites},
          {"occlusion_half_max", c.simulate.scans.occlusion_half_max},
          {"occlusion_rate", c.simulate.scans.occlusion_rate}}},
        {"cluster_radius", c.simulate.cluster_radius},
        {"min_points", c.simulate.min_points},
        {"systematic",
         {{"gain_spread", c.simulate.systematic.gain_spread},
          {"amp_coupling", c.simulate.systematic.amp_coupling},
          {"offset_spread", c.simulate.systematic.offset_spread}}},
    };
    j["calib"] = {{"depth_steps", c.calib.depth_steps}, {"reflectivity_steps", c.calib.reflectivity_steps}};
    j["encoder"] = {{"patch", c.encoder.patch},
                    {"range_halfwidth", c.encoder.range_halfwidth},
                    {"range_quant_min", c.encoder.range_quant.min},
                    {"range_quant_max", c.encoder.range_quant.max},
                    {"bins", c.encoder.range_quant.bins}};
    auto train_json = [](const TrainConfig& t) {
        return nlohmann::json{{"learning_rate", t.learning_rate}, {"lr_decay", t.lr_decay},
                              {"momentum", t.momentum},           {"batch_size", t.batch_size},
                              {"epochs", t.epochs},               {"seed", t.seed}};
    };
    j["train_range"] = train_json(c.train_range);
    j["train_boundary"] = train_json(c.train_boundary);
    j["boundary_negative_ratio"] = c.boundary_negative_ratio;
    j["canny"] = {{"sigma", c.canny.sigma}, {"low", c.canny.low}, {"high", c.canny.high}};
    j["detect"] = {{"low", c.detect.low}, {"high", c.detect.high}};
    j["geodesic"] = {{"k", c.geodesic.k}, {"sigma", c.geodesic.sigma}, {"step_cost", c.geodesic.step_cost}};
    j["eval"] = {{"thresholds_mm", c.eval.thresholds_mm},
                 {"boundary_margin", c.eval.boundary_margin},
                 {"edge_tolerance", c.eval.edge_tolerance}};
    return j;
}

PipelineConfig config_from_json(const nlohmann::json& j) {
    PipelineConfig c;
    try {
        c.seed = j.value("seed", c.seed);
        if (j.contains("paths")) {
            const auto& p = j.at("paths");
            c.paths.dataset = p.value("dataset", c.paths.dataset);
            c.paths.models = p.value("models", c.paths.models);
            c.paths.output = p.value("output", c.paths.output);
        }
        if (j.contains("simulate")) {
            const auto& s = j.at("simulate");
            c.simulate.width = s.value("width", c.simulate.width);
            c.simulate.height = s.value("height", c.simulate.height);
            c.simulate.train_scenes = s.value("train_scenes", c.simulate.train_scenes);
            c.simulate.test_scenes = s.value("test_scenes", c.simulate.test_scenes);
            c.simulate.objects_min = s.value("objects_min", c.simulate.objects_min);
            c.simulate.objects_max = s.value("objects_max", c.simulate.objects_max);
            c.simulate.platform_depth_min = s.value("platform_depth_min", c.simulate.platform_depth_min);
            c.simulate.platform_depth_max = s.value("platform_depth_max", c.simulate.platform_depth_max);
            c.simulate.relief_min = s.value("relief_min", c.simulate.relief_min);
            c.simulate.relief_max = s.value("relief_max", c.simulate.relief_max);
            c.simulate.border_margin = s.value("border_margin", c.simulate.border_margin);
            if (s.contains("distortion")) {
                const auto& d = s.at("distortion");
                c.simulate.distortion.psf_radius = d.value("psf_radius", c.simulate.distortion.psf_radius);
                c.simulate.distortion.overshoot_gain =
                    d.value("overshoot_gain", c.simulate.distortion.overshoot_gain);
                c.simulate.distortion.overshoot_radius =
                    d.value("overshoot_radius", c.simulate.distortion.overshoot_radius);
                c.simulate.distortion.noise_sigma = d.value("noise_sigma", c.simulate.distortion.noise_sigma);
            }
            if (s.contains("scans")) {
                const auto& sc = s.at("scans");
                c.simulate.scans.count = sc.value("count", c.simulate.scans.count);
                c.simulate.scans.jitter_sigma = sc.value("jitter_sigma", c.simulate.scans.jitter_sigma);
                c.simulate.scans.occlusion_sites = sc.value("occlusion_sites", c.simulate.scans.occlusion_sites);
                c.simulate.scans.occlusion_half_max =
                    sc.value("occlusion_half_max", c.simulate.scans.occlusion_half_max);
                c.simulate.scans.occlusion_rate = sc.value("occlusion_rate", c.simulate.scans.occlusion_rate);
            }
            c.simulate.cluster_radius = s.value("cluster_radius", c.simulate.cluster_radius);
            c.simulate.min_points = s.value("min_points", c.simulate.min_points);
            if (s.contains("systematic")) {
                const auto& sy = s.at("systematic");
                c.simulate.systematic.gain_spread = sy.value("gain_spread", c.simulate.systematic.gain_spread);
                c.simulate.systematic.amp_coupling =
                    sy.value("amp_coupling", c.simulate.systematic.amp_coupling);
                c.simulate.systematic.offset_spread =
                    sy.value("offset_spread", c.simulate.systematic.offset_spread);
            }
        }
        if (j.contains("calib")) {
            c.calib.depth_steps = j.at("calib").value("depth_steps", c.calib.depth_steps);
            c.calib.reflectivity_steps = j.at("calib").value("reflectivity_steps", c.calib.reflectivity_steps);
        }
        if (j.contains("encoder")) {
            const auto& e = j.at("encoder");
            c.encoder.patch = e.value("patch", c.encoder.patch);
            c.encoder.range_halfwidth = e.value("range_halfwidth", c.encoder.range_halfwidth);
            c.encoder.range_quant.min = e.value("range_quant_min", c.encoder.range_quant.min);
            c.encoder.range_quant.max = e.value("range_quant_max", c.encoder.range_quant.max);
            c.encoder.range_quant.bins = e.value("bins", c.encoder.range_quant.bins);
            c.encoder.amp_quant.bins = c.encoder.range_quant.bins;
        }
        auto read_train = [](const nlohmann::json& t, TrainConfig& cfg) {
            cfg.learning_rate = t.value("learning_rate", cfg.learning_rate);
            cfg.lr_decay = t.value("lr_decay", cfg.lr_decay);
            cfg.momentum = t.value("momentum", cfg.momentum);
            cfg.batch_size = t.value("batch_size", cfg.batch_size);
            cfg.epochs = t.value("epochs", cfg.epochs);
            cfg.seed = t.value("seed", cfg.seed);
        };
        if (j.contains("train_range")) read_train(j.at("train_range"), c.train_range);
        if (j.contains("train_boundary")) read_train(j.at("train_boundary"), c.train_boundary);
        c.boundary_negative_ratio = j.value("boundary_negative_ratio", c.boundary_negative_ratio);
        if (j.contains("canny")) {
            c.canny.sigma = j.at("canny").value("sigma", c.canny.sigma);
            c.canny.low = j.at("canny").value("low", c.canny.low);
            c.canny.high = j.at("canny").value("high", c.canny.high);
        }
        if (j.contains("detect")) {
            c.detect.low = j.at("detect").value("low", c.detect.low);
            c.detect.high = j.at("detect").value("high", c.detect.high);
        }
        if (j.contains("geodesic")) {
            c.geodesic.k = j.at("geodesic").value("k", c.geodesic.k);
            c.geodesic.sigma = j.at("geodesic").value("sigma", c.geodesic.sigma);
            c.geodesic.step_cost = j.at("geodesic").value("step_cost", c.geodesic.step_cost);
        }
        if (j.contains("eval")) {
            const auto& e = j.at("eval");
            if (e.contains("thresholds_mm"))
                c.eval.thresholds_mm = e.at("thresholds_mm").get<std::vector<double>>();
            c.eval.boundary_margin = e.value("boundary_margin", c.eval.boundary_margin);
            c.eval.edge_tolerance = e.value("edge_tolerance", c.eval.edge_tolerance);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
    return config_from_json(read_json_file(path));
}

void apply_override(nlohmann::json& tree, const std::string& assignment) {
    size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw Error(ErrorCode::InvalidArgument, "--set expects dotted.key=value, got '" + assignment + "'");
    std::string key = assignment.substr(0, eq);
    std::string value = assignment.substr(eq + 1);
    std::string pointer = "/";
    for (char ch : key) pointer += ch == '.' ? '/' : ch;
    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(value);
    } catch (const nlohmann::json::exception&) {
        parsed = value;  // plain string
    }
    tree[nlohmann::json::json_pointer(pointer)] = parsed;
}

DatasetManifest cmd_simulate(const PipelineConfig& config) {
    config.validate();
    fs::path root(config.paths.dataset);
    fs::create_directories(root / "scenes");
    fs::create_directories(root / "images");

    SystematicField sysfield = systematic_field_for(config);

    DatasetManifest manifest;
    manifest.width = config.simulate.width;
    manifest.height = config.simulate.height;
    manifest.seed = config.seed;
    manifest.root = root;

    auto make_split = [&](const std::string& split, int count, std::vector<ManifestEntry>& out) {
        for (int i = 0; i < count; ++i) {
            std::string id = split + "_" + zero_pad(i, 3);
            Rng scene_rng(derive_seed(config.seed, "scene-" + id));
            Scene scene = random_scene(config.simulate, scene_rng);

            Rendered clean = render_reference(scene);
            ScanSet scans = generate_scanset(scene, config.simulate.scans,
                                             derive_seed(config.seed, "scans-" + id));
            RangeImage reference =
                fuse_reference(scans, config.simulate.cluster_radius, config.simulate.min_points);
            RangeImage multipath = apply_multipath(clean.range, clean.amplitude, config.simulate.distortion,
                                                   derive_seed(config.seed, "multipath-" + id));
            RangeImage raw = apply_systematic(sysfield, multipath, clean.amplitude);

            ManifestEntry entry;
            entry.scene = "scenes/" + id + ".json";
            entry.distorted_range = "images/" + id + "_raw.tfd";
            entry.amplitude = "images/" + id + "_amp.tfd";
            entry.reference_range = "images/" + id + "_ref.tfd";

            nlohmann::json sj = scene_to_json(scene);
            sj["seed"] = derive_seed(config.seed, "scene-" + id);
            sj["distortion"] = {{"psf_radius", config.simulate.distortion.psf_radius},
                                {"overshoot_gain", config.simulate.distortion.overshoot_gain},
                                {"overshoot_radius", config.simulate.distortion.overshoot_radius},
                                {"noise_sigma", config.simulate.distortion.noise_sigma}};
            write_json_file(sj, root / entry.scene);
            write_range_image(raw, root / entry.distorted_range);
            write_amplitude_image(clean.amplitude, root / entry.amplitude);
            write_range_image(reference, root / entry.reference_range);
            out.push_back(entry);
        }
    };
    make_split("train", config.simulate.train_scenes, manifest.train);
    make_split("test", config.simulate.test_scenes, manifest.test);

    save_manifest(manifest, root / "manifest.json");
    return manifest;
}

double cmd_fit_calib(const PipelineConfig& config) {
    config.validate();
    fs::path models(config.paths.models);
    fs::create_directories(models);

    SystematicField sysfield = systematic_field_for(config);
    int w = config.simulate.width, h = config.simulate.height;

    CalibAccumulator acc(w, h);
    std::vector<CalibFrame> residual_frames;
    for (int d = 0; d < config.calib.depth_steps; ++d)
        for (int r = 0; r < config.calib.reflectivity_steps; ++r) {
            double depth = config.calib.depth_steps == 1
                               ? 250.0
                               : 160.0 + (390.0 - 160.0) * d / (config.calib.depth_steps - 1);
            double reflect = config.calib.reflectivity_steps == 1
                                 ? 0.6
                                 : 0.25 + 0.7 * r / (config.calib.reflectivity_steps - 1);
            Scene flat;
            flat.width = w;
            flat.height = h;
            flat.platform_depth = depth;
            flat.platform_reflectivity = reflect;
            Rendered clean = render_reference(flat);
            RangeImage observed = apply_systematic(sysfield, clean.range, clean.amplitude);
            acc.add_frame(observed, clean.amplitude, clean.range);
            if (d == 0 || d + 1 == config.calib.depth_steps)
                residual_frames.push_back({observed, clean.amplitude, clean.range});
        }

    CalibModel model = acc.fit();
    save_calib(model, models / "calib.tfc");

    double worst = 0.0;
    for (const CalibFrame& f : residual_frames) {
        RangeImage corrected = apply_calibration(model, f.observed, f.amplitude);
        for (size_t i = 0; i < corrected.data.size(); ++i)
            worst = std::max(worst, std::fabs(static_cast<double>(corrected.data[i]) - f.truth.data[i]));
    }
    return worst;
}

TrainOutcome cmd_train_range(const PipelineConfig& config) {
    config.validate();
    fs::path models(config.paths.models);
    fs::create_directories(models);
    DatasetManifest manifest = load_manifest(fs::path(config.paths.dataset) / "manifest.json");
    if (manifest.train.empty()) throw Error(ErrorCode::MissingData, "train: manifest has no training entries");
    CalibModel calib = load_calib_or_throw(config);
    EncoderParams encoder = finalized_encoder(config, manifest);

    TrainConfig cfg = config.train_range;
    cfg.seed = derive_seed(config.seed, "train-range");
    RangeTrainResult result = train_range_nn(manifest.train, manifest.root, &calib, encoder, cfg);

    TrainOutcome outcome;
    fs::path model_path = models / "range_nn.tfb";
    save_range_model(result.model, model_path);
    outcome.model_files.push_back(model_path);
    fs::path log_path = models / "range_nn_loss.csv";
    write_loss_csv(result.log, log_path);
    outcome.log_files.push_back(log_path);
    std::cout << "range NN: " << result.sample_count << " samples";
    if (!result.log.epoch_loss.empty()) std::cout << ", final epoch loss " << result.log.epoch_loss.back();
    std::cout << "\n";
    return outcome;
}

TrainOutcome cmd_train_boundary(const PipelineConfig& config) {
    config.validate();
    fs::path models(config.paths.models);
    fs::create_directories(models);
    DatasetManifest manifest = load_manifest(fs::path(config.paths.dataset) / "manifest.json");
    if (manifest.train.empty()) throw Error(ErrorCode::MissingData, "train: manifest has no training entries");
    CalibModel calib = load_calib_or_throw(config);
    EncoderParams encoder = finalized_encoder(config, manifest);

    BoundaryDatasets datasets =
        build_boundary_dataset(manifest.train, manifest.root, &calib, encoder, config.canny,
                               config.boundary_negative_ratio, derive_seed(config.seed, "boundary-dataset"));

    TrainOutcome outcome;
    for (int g = 0; g < 4; ++g) {
        MlpModel net = make_boundary_net(encoder.boundary_vector_size(),
                                         derive_seed(config.seed, "boundary-init-" + std::to_string(g)));
        TrainConfig cfg = config.train_boundary;
        cfg.seed = derive_seed(config.seed, "boundary-train-" + std::to_string(g));
        TrainLog log = train(net, datasets.groups[g], cfg);

        fs::path model_path = models / ("boundary_g" + std::to_string(g) + ".tfb");
        save_model_bundle(encoder, net, "boundary-detector-" + std::to_string(g), model_path);
        outcome.model_files.push_back(model_path);
        fs::path log_path = models / ("boundary_g" + std::to_string(g) + "_loss.csv");
        write_loss_csv(log, log_path);
        outcome.log_files.push_back(log_path);
        std::cout << "boundary NN " << g << ": " << datasets.groups[g].size() << " samples";
        if (!log.epoch_loss.empty()) std::cout << ", final epoch loss " << log.epoch_loss.back();
        std::cout << "\n";
    }
    return outcome;
}

namespace {

BoundaryModelSet load_boundary_models(const PipelineConfig& config) {
    BoundaryModelSet set;
    for (int g = 0; g < 4; ++g) {
        fs::path path = fs::path(config.paths.models) / ("boundary_g" + std::to_string(g) + ".tfb");
        if (!fs::exists(path))
            throw Error(ErrorCode::MissingData, "boundary model not found at " + path.string() +
                                                    "; run train --target boundary first");
        ModelBundle bundle = load_model_bundle(path);
        set.encoder = bundle.encoder;
        set.nets[g] = std::move(bundle.net);
    }
    return set;
}

}  // namespace

InferOutputs cmd_infer(const PipelineConfig& config, std::optional<int> entry_index) {
    config.validate();
    DatasetManifest manifest = load_manifest(fs::path(config.paths.dataset) / "manifest.json");
    if (manifest.test.empty()) throw Error(ErrorCode::MissingData, "infer: manifest has no test entries");
    CalibModel calib = load_calib_or_throw(config);

    fs::path range_model_path = fs::path(config.paths.models) / "range_nn.tfb";
    if (!fs::exists(range_model_path))
        throw Error(ErrorCode::MissingData, "range model not found at " + range_model_path.string() +
                                                "; run train --target range first");
    RangeRecoveryModel range_model = load_range_model(range_model_path);
    BoundaryModelSet boundary_models = load_boundary_models(config);

    fs::path out_dir(config.paths.output);
    fs::create_directories(out_dir / "images");

    std::vector<int> indices;
    if (entry_index) {
        if (*entry_index < 0 || *entry_index >= static_cast<int>(manifest.test.size()))
            throw Error(ErrorCode::InvalidArgument, "infer: test entry index out of range");
        indices.push_back(*entry_index);
    } else {
        for (int i = 0; i < static_cast<int>(manifest.test.size()); ++i) indices.push_back(i);
    }

    InferOutputs outputs;
    outputs.timings = {{"calibrate", 0.0}, {"range_nn", 0.0}, {"boundary_nn", 0.0}, {"geodesic", 0.0}};
    nlohmann::json entries_json = nlohmann::json::array();

    for (int idx : indices) {
        const ManifestEntry& entry = manifest.test[idx];
        RangeImage raw = read_range_image(manifest.resolve(entry.distorted_range));
        AmplitudeImage amp = read_amplitude_image(manifest.resolve(entry.amplitude));

        Timer t0;
        RangeImage calibrated = apply_calibration(calib, raw, amp);
        outputs.timings[0].milliseconds += t0.ms();

        Timer t1;
        RangeImage recovered = recover_range(range_model, calibrated, amp);
        outputs.timings[1].milliseconds += t1.ms();

        Timer t2;
        EdgeMap edges = detect_boundaries(boundary_models, calibrated, amp, config.detect);
        outputs.timings[2].milliseconds += t2.ms();

        Timer t3;
        RangeImage final_range = geodesic_filter(recovered, edges, config.geodesic.k, config.geodesic.sigma,
                                                 config.geodesic.step_cost);
        outputs.timings[3].milliseconds += t3.ms();

        std::string id = "test_" + zero_pad(idx, 3);
        nlohmann::json je;
        je["index"] = idx;
        je["calibrated"] = "images/" + id + "_calibrated.tfd";
        je["recovered"] = "images/" + id + "_rf.tfd";
        je["edges"] = "images/" + id + "_edges.tfd";
        je["orientation"] = "images/" + id + "_orient.tfd";
        je["edge_score"] = "images/" + id + "_edge_score.tfd";
        je["final"] = "images/" + id + "_final.tfd";
        write_range_image(calibrated, out_dir / je["calibrated"].get<std::string>());
        write_range_image(recovered, out_dir / je["recovered"].get<std::string>());
        write_edge_map(edges, out_dir / je["edges"].get<std::string>(),
                       out_dir / je["orientation"].get<std::string>());
        // Thinned detector scores ride in an amplitude-tagged (unitless) file.
        ImageFile score_file;
        score_file.channel = Channel::Amplitude;
        score_file.width = edges.width;
        score_file.height = edges.height;
        score_file.data = edges.score;
        write_image(score_file, out_dir / je["edge_score"].get<std::string>());
        write_range_image(final_range, out_dir / je["final"].get<std::string>());
        entries_json.push_back(je);
        ++outputs.entries_processed;
    }

    nlohmann::json out_manifest;
    out_manifest["entries"] = entries_json;
    nlohmann::json timings_json;
    for (const StageTiming& t : outputs.timings) timings_json[t.stage] = t.milliseconds;
    out_manifest["stage_milliseconds"] = timings_json;
    outputs.outputs_manifest = out_dir / "outputs.json";
    write_json_file(out_manifest, outputs.outputs_manifest);

    std::cout << "stage timings over " << outputs.entries_processed << " image(s):\n";
    for (const StageTiming& t : outputs.timings)
        std::cout << "  " << t.stage << ": " << t.milliseconds << " ms\n";
    return outputs;
}

nlohmann::json cmd_eval(const PipelineConfig& config) {
    config.validate();
    DatasetManifest manifest = load_manifest(fs::path(config.paths.dataset) / "manifest.json");
    fs::path out_dir(config.paths.output);
    nlohmann::json outputs_manifest = read_json_file(out_dir / "outputs.json");
    CalibModel calib = load_calib_or_throw(config);

    const std::vector<double>& thresholds = config.eval.thresholds_mm;
    const char* kMethods[4] = {"distorted", "calibrated", "range_nn", "final"};
    AccuracyAccumulator acc_all[4] = {AccuracyAccumulator(thresholds), AccuracyAccumulator(thresholds),
                                      AccuracyAccumulator(thresholds), AccuracyAccumulator(thresholds)};
    AccuracyAccumulator acc_boundary[4] = {AccuracyAccumulator(thresholds), AccuracyAccumulator(thresholds),
                                           AccuracyAccumulator(thresholds), AccuracyAccumulator(thresholds)};
    PrAccumulator pr_nn(default_pr_thresholds(), config.eval.edge_tolerance);
    PrAccumulator pr_canny(default_pr_thresholds(), config.eval.edge_tolerance);

    for (const auto& je : outputs_manifest.at("entries")) {
        int idx = je.at("index").get<int>();
        const ManifestEntry& entry = manifest.test.at(idx);
        RangeImage raw = read_range_image(manifest.resolve(entry.distorted_range));
        AmplitudeImage amp = read_amplitude_image(manifest.resolve(entry.amplitude));
        RangeImage ref = read_range_image(manifest.resolve(entry.reference_range));
        RangeImage calibrated = apply_calibration(calib, raw, amp);
        RangeImage recovered = read_range_image(out_dir / je.at("recovered").get<std::string>());
        RangeImage final_range = read_range_image(out_dir / je.at("final").get<std::string>());

        EdgeMap gt = gt_edges(ref, config.canny);
        std::vector<uint8_t> region = boundary_region_mask(gt, config.eval.boundary_margin);

        const RangeImage* est[4] = {&raw, &calibrated, &recovered, &final_range};
        for (int m = 0; m < 4; ++m) {
            acc_all[m].add(*est[m], ref, nullptr);
            acc_boundary[m].add(*est[m], ref, &region);
        }

        EdgeMap detected;
        detected.width = gt.width;
        detected.height = gt.height;
        ImageFile score_file = read_image(out_dir / je.at("edge_score").get<std::string>());
        detected.score = score_file.data;
        detected.edge.assign(detected.score.size(), 0);
        detected.group.assign(detected.score.size(), 0);
        pr_nn.add(detected, gt);

        EdgeMap canny_input = gt_edges(calibrated, config.canny);
        pr_canny.add(canny_input, gt);
    }

    auto curve_json = [](const AccuracyCurve& c) {
        return nlohmann::json{{"thresholds_mm", c.thresholds}, {"fraction_correct", c.fraction}};
    };
    auto pr_json = [](const PrCurve& c) {
        nlohmann::json points = nlohmann::json::array();
        for (const PrPoint& p : c.points)
            points.push_back({{"threshold", p.threshold},
                              {"precision", p.precision},
                              {"recall", p.recall},
                              {"f1", p.f1}});
        return nlohmann::json{{"best_f1", c.best_f1}, {"points", points}};
    };

    nlohmann::json report;
    AccuracyCurve curves_all[4], curves_boundary[4];
    for (int m = 0; m < 4; ++m) {
        curves_all[m] = acc_all[m].curve();
        curves_boundary[m] = acc_boundary[m].curve();
        report["methods"][kMethods[m]]["all"] = curve_json(curves_all[m]);
        report["methods"][kMethods[m]]["boundary"] = curve_json(curves_boundary[m]);
    }
    PrCurve nn_curve = pr_nn.curve();
    PrCurve canny_curve = pr_canny.curve();
    report["edge_detector"]["nn"] = pr_json(nn_curve);
    report["edge_detector"]["canny_on_input"] = pr_json(canny_curve);

    // Relative error reduction at the operating point nearest 5 mm.
    double tau = thresholds.front();
    for (double t : thresholds)
        if (std::fabs(t - 5.0) < std::fabs(tau - 5.0)) tau = t;
    auto fraction_at = [&](const AccuracyCurve& c, double want) {
        for (size_t i = 0; i < c.thresholds.size(); ++i)
            if (c.thresholds[i] == want) return c.fraction[i];
        return c.fraction.back();
    };
    double acc_raw = fraction_at(curves_all[0], tau);
    double acc_cal = fraction_at(curves_all[1], tau);
    double acc_final = fraction_at(curves_all[3], tau);
    report["relative_improvement_at_5mm"] = {
        {"tau_mm", tau},
        {"vs_distorted", acc_raw < 1.0 ? (acc_final - acc_raw) / (1.0 - acc_raw) : 0.0},
        {"vs_calibrated", acc_cal < 1.0 ? (acc_final - acc_cal) / (1.0 - acc_cal) : 0.0},
    };
    report["boundary_region_at_5mm"] = {
        {"range_nn", fraction_at(curves_boundary[2], tau)},
        {"final", fraction_at(curves_boundary[3], tau)},
    };

    write_json_file(report, out_dir / "report.json");

    for (const char* region : {"all", "boundary"}) {
        std::ofstream csv(out_dir / ("accuracy_" + std::string(region) + ".csv"), std::ios::trunc);
        csv << "threshold_mm";
        for (const char* m : kMethods) csv << "," << m;
        csv << "\n";
        const AccuracyCurve* curves = std::string(region) == "all" ? curves_all : curves_boundary;
        for (size_t t = 0; t < thresholds.size(); ++t) {
            csv << thresholds[t];
            for (int m = 0; m < 4; ++m) csv << "," << curves[m].fraction[t];
            csv << "\n";
        }
    }
    {
        std::ofstream csv(out_dir / "edge_pr.csv", std::ios::trunc);
        csv << "threshold,nn_precision,nn_recall,nn_f1,canny_precision,canny_recall,canny_f1\n";
        for (size_t i = 0; i < nn_curve.points.size(); ++i) {
            const PrPoint& a = nn_curve.points[i];
            const PrPoint& b = canny_curve.points[i];
            csv << a.threshold << "," << a.precision << "," << a.recall << "," << a.f1 << "," << b.precision
                << "," << b.recall << "," << b.f1 << "\n";
        }
    }
    return report;
}

}  // namespace tofclean
