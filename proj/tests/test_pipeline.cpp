#include <doctest.h>

#include <fstream>

#include <nlohmann/json.hpp>

#include "test_util.hpp"
#include "tofclean/pipeline.hpp"
#include "tofclean/rangenet.hpp"

using namespace tofclean;

namespace {

PipelineConfig tiny_config(const std::filesystem::path& root) {
    PipelineConfig c;
    c.paths.dataset = (root / "data").string();
    c.paths.models = (root / "models").string();
    c.paths.output = (root / "out").string();
    c.simulate.train_scenes = 3;
    c.simulate.test_scenes = 2;
    c.simulate.scans.count = 8;
    c.calib.depth_steps = 8;
    c.train_range.epochs = 2;
    c.train_range.batch_size = 500;
    c.train_boundary.epochs = 3;
    c.seed = 777;
    return c;
}

std::vector<uint8_t> slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("simulate writes the manifest with the requested split sizes") {
    testutil::TempDir dir("pipeline");
    PipelineConfig c = tiny_config(dir.path());
    DatasetManifest manifest = cmd_simulate(c);
    CHECK(manifest.train.size() == 3);
    CHECK(manifest.test.size() == 2);
    DatasetManifest loaded = load_manifest(std::filesystem::path(c.paths.dataset) / "manifest.json");
    CHECK(loaded.train.size() == 3);
    CHECK(loaded.width == 64);
    for (const ManifestEntry& e : loaded.train) {
        CHECK(std::filesystem::exists(loaded.resolve(e.scene)));
        CHECK(std::filesystem::exists(loaded.resolve(e.distorted_range)));
        CHECK(std::filesystem::exists(loaded.resolve(e.amplitude)));
        CHECK(std::filesystem::exists(loaded.resolve(e.reference_range)));
    }
}

TEST_CASE("simulate is byte-identical under one seed") {
    testutil::TempDir dir("pipeline");
    PipelineConfig a = tiny_config(dir.path() / "a");
    PipelineConfig b = tiny_config(dir.path() / "b");
    cmd_simulate(a);
    cmd_simulate(b);
    for (const char* rel :
         {"manifest.json", "images/train_000_raw.tfd", "images/train_002_ref.tfd", "images/test_001_amp.tfd"})
        CHECK(slurp(std::filesystem::path(a.paths.dataset) / rel) ==
              slurp(std::filesystem::path(b.paths.dataset) / rel));
}

TEST_CASE("zero scenes produce an empty manifest without error") {
    testutil::TempDir dir("pipeline");
    PipelineConfig c = tiny_config(dir.path());
    c.simulate.train_scenes = 0;
    c.simulate.test_scenes = 0;
    DatasetManifest manifest = cmd_simulate(c);
    CHECK(manifest.train.empty());
    CHECK(manifest.test.empty());
}

TEST_CASE("calibration removes the injected systematic error") {
    testutil::TempDir dir("pipeline");
    PipelineConfig c = tiny_config(dir.path());
    double worst = cmd_fit_calib(c);
    CHECK(worst < 1e-3);
    CHECK(std::filesystem::exists(std::filesystem::path(c.paths.models) / "calib.tfc"));
}

TEST_CASE("the full tiny pipeline runs end to end and is reproducible") {
    testutil::TempDir dir("pipeline");
    PipelineConfig c = tiny_config(dir.path());
    cmd_simulate(c);
    cmd_fit_calib(c);

    TrainOutcome range_outcome = cmd_train_range(c);
    REQUIRE(range_outcome.model_files.size() == 1);

    // Loss log has one row per epoch.
    std::ifstream log(range_outcome.log_files[0]);
    std::string line;
    int rows = 0;
    while (std::getline(log, line))
        if (!line.empty()) ++rows;
    CHECK(rows == c.train_range.epochs + 1);  // header + epochs

    TrainOutcome boundary_outcome = cmd_train_boundary(c);
    CHECK(boundary_outcome.model_files.size() == 4);

    InferOutputs outputs = cmd_infer(c);
    CHECK(outputs.entries_processed == 2);
    CHECK(std::filesystem::exists(outputs.outputs_manifest));

    nlohmann::json report = cmd_eval(c);
    CHECK(report.contains("methods"));
    CHECK(report["methods"].size() == 4);
    for (const char* m : {"distorted", "calibrated", "range_nn", "final"}) {
        REQUIRE(report["methods"].contains(m));
        CHECK(report["methods"][m].contains("all"));
        CHECK(report["methods"][m].contains("boundary"));
        const auto& fractions = report["methods"][m]["all"]["fraction_correct"];
        for (size_t i = 1; i < fractions.size(); ++i)
            CHECK(fractions[i].get<double>() >= fractions[i - 1].get<double>());
    }
    CHECK(report.contains("edge_detector"));
    CHECK(report.contains("relative_improvement_at_5mm"));

    // Re-training with the same seed reproduces the model file bytes.
    auto model_bytes = slurp(range_outcome.model_files[0]);
    cmd_train_range(c);
    CHECK(slurp(range_outcome.model_files[0]) == model_bytes);

    // The reported relative-improvement field matches its definition.
    auto fraction_at5 = [&](const char* method) {
        const auto& curve = report["methods"][method]["all"];
        const auto& ts = curve["thresholds_mm"];
        for (size_t i = 0; i < ts.size(); ++i)
            if (ts[i].get<double>() == 5.0) return curve["fraction_correct"][i].get<double>();
        FAIL("missing 5 mm threshold");
        return 0.0;
    };
    double acc_raw = fraction_at5("distorted");
    double acc_final = fraction_at5("final");
    CHECK(report["relative_improvement_at_5mm"]["vs_distorted"].get<double>() ==
          doctest::Approx((acc_final - acc_raw) / (1.0 - acc_raw)).epsilon(1e-12));

    // Later stages never mutate earlier artifacts.
    auto manifest_bytes = slurp(std::filesystem::path(c.paths.dataset) / "manifest.json");
    auto raw_bytes = slurp(std::filesystem::path(c.paths.dataset) / "images" / "test_000_raw.tfd");
    cmd_infer(c);
    cmd_eval(c);
    CHECK(slurp(std::filesystem::path(c.paths.dataset) / "manifest.json") == manifest_bytes);
    CHECK(slurp(std::filesystem::path(c.paths.dataset) / "images" / "test_000_raw.tfd") == raw_bytes);

    // Inference is deterministic: re-running reproduces output bytes.
    auto final_bytes = slurp(std::filesystem::path(c.paths.output) / "images" / "test_000_final.tfd");
    cmd_infer(c);
    CHECK(slurp(std::filesystem::path(c.paths.output) / "images" / "test_000_final.tfd") == final_bytes);
}

TEST_CASE("eval scores injected perfect estimates at 1.0 everywhere") {
    testutil::TempDir dir("pipeline");
    PipelineConfig c = tiny_config(dir.path());
    DatasetManifest manifest = cmd_simulate(c);
    cmd_fit_calib(c);
    cmd_train_range(c);
    cmd_train_boundary(c);
    cmd_infer(c);

    // Overwrite the recovered and final estimates with the reference.
    nlohmann::json outputs;
    {
        std::ifstream in(std::filesystem::path(c.paths.output) / "outputs.json");
        in >> outputs;
    }
    for (const auto& je : outputs["entries"]) {
        int idx = je["index"].get<int>();
        RangeImage ref = read_range_image(manifest.resolve(manifest.test[idx].reference_range));
        write_range_image(ref, std::filesystem::path(c.paths.output) / je["recovered"].get<std::string>());
        write_range_image(ref, std::filesystem::path(c.paths.output) / je["final"].get<std::string>());
    }
    nlohmann::json report = cmd_eval(c);
    for (const char* method : {"range_nn", "final"})
        for (const char* region : {"all", "boundary"})
            for (const auto& f : report["methods"][method][region]["fraction_correct"])
                CHECK(f.get<double>() == 1.0);
}

TEST_CASE("inference on a single entry honors the index argument") {
    testutil::TempDir dir("pipeline");
    PipelineConfig c = tiny_config(dir.path());
    cmd_simulate(c);
    cmd_fit_calib(c);
    cmd_train_range(c);
    cmd_train_boundary(c);
    InferOutputs one = cmd_infer(c, 1);
    CHECK(one.entries_processed == 1);
    CHECK_THROWS_AS(cmd_infer(c, 5), Error);
}

TEST_CASE("missing models are reported as missing data") {
    testutil::TempDir dir("pipeline");
    PipelineConfig c = tiny_config(dir.path());
    cmd_simulate(c);
    try {
        cmd_train_range(c);  // no calibration fitted yet
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MissingData);
    }
}

TEST_CASE("zero-weight models make the whole inference chain the identity on constant input") {
    EncoderParams enc;
    enc.amp_halfwidth = 1.5;
    enc.amp_quant = {0.0, 3.0, 20};

    RangeRecoveryModel range_model{enc, make_range_net(enc.vector_size(), 0)};
    for (auto& w : range_model.net.weights) std::fill(w.begin(), w.end(), 0.f);
    for (auto& b : range_model.net.biases) std::fill(b.begin(), b.end(), 0.f);

    BoundaryModelSet boundary_models;
    boundary_models.encoder = enc;
    for (int g = 0; g < 4; ++g) {
        boundary_models.nets[g] = make_boundary_net(enc.boundary_vector_size(), g);
        for (auto& w : boundary_models.nets[g].weights) std::fill(w.begin(), w.end(), 0.f);
        for (auto& b : boundary_models.nets[g].biases) std::fill(b.begin(), b.end(), 0.f);
    }

    RangeImage calibrated = RangeImage::constant(24, 24, 300.f);
    AmplitudeImage amp = AmplitudeImage::constant(24, 24, 1.f);
    RangeImage recovered = recover_range(range_model, calibrated, amp);
    CHECK(recovered.data == calibrated.data);

    // Zero-weight detectors sit at a neutral 0.5 everywhere; with a high
    // threshold above 0.5 nothing seeds and the map stays empty.
    EdgeMap edges = detect_boundaries(boundary_models, calibrated, amp, DetectParams{0.3, 0.6});
    for (uint8_t e : edges.edge) CHECK(e == 0);

    // The final estimate equals the calibrated input regardless of the
    // detector thresholds: constant inputs filter to themselves exactly.
    EdgeMap default_edges = detect_boundaries(boundary_models, calibrated, amp, DetectParams{});
    RangeImage final_range = geodesic_filter(recovered, default_edges, 81, 2.0, 1.5);
    CHECK(final_range.data == calibrated.data);
}

TEST_CASE("config overrides apply through dotted keys") {
    nlohmann::json tree = nlohmann::json::object();
    apply_override(tree, "simulate.train_scenes=7");
    apply_override(tree, "paths.dataset=/tmp/x");
    apply_override(tree, "geodesic.sigma=3.5");
    PipelineConfig c = config_from_json(tree);
    CHECK(c.simulate.train_scenes == 7);
    CHECK(c.paths.dataset == "/tmp/x");
    CHECK(c.geodesic.sigma == 3.5);
    CHECK_THROWS_AS(apply_override(tree, "no-equals-sign"), Error);
}

TEST_CASE("config JSON round-trips through its serializer") {
    PipelineConfig c;
    c.seed = 123;
    c.geodesic.k = 41;
    c.eval.thresholds_mm = {2, 4, 6};
    PipelineConfig back = config_from_json(config_to_json(c));
    CHECK(back.seed == 123);
    CHECK(back.geodesic.k == 41);
    CHECK(back.eval.thresholds_mm == std::vector<double>{2, 4, 6});
}
