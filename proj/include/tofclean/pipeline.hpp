#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tofclean/boundary.hpp"
#include "tofclean/calib.hpp"
#include "tofclean/dataset.hpp"
#include "tofclean/encode.hpp"
#include "tofclean/geodesic.hpp"
#include "tofclean/mlp.hpp"
#include "tofclean/simulate.hpp"

namespace tofclean {

/// Everything the pipeline commands need, with defaults sized so the whole
/// train/infer/eval loop runs in minutes on one CPU core.
struct PipelineConfig {
    uint64_t seed = 20240501;

    struct Paths {
        std::string dataset = "run/data";
        std::string models = "run/models";
        std::string output = "run/out";
    } paths;

    struct Simulate {
        int width = 64;
        int height = 64;
        int train_scenes = 20;
        int test_scenes = 8;
        int objects_min = 2;
        int objects_max = 5;
        double platform_depth_min = 280.0;
        double platform_depth_max = 380.0;
        double relief_min = 25.0;   // object height above platform, mm
        double relief_max = 60.0;   // kept near the 15 mm clamp regime
        int border_margin = 8;      // keep object footprints this far inside
        DistortionParams distortion;
        ScanOptions scans;
        double cluster_radius = 10.0;
        int min_points = 3;
        struct Systematic {
            double gain_spread = 0.03;
            double amp_coupling = 2.0;
            double offset_spread = 6.0;
        } systematic;
    } simulate;

    struct Calib {
        int depth_steps = 25;
        int reflectivity_steps = 3;
    } calib;

    EncoderParams encoder;

    TrainConfig train_range;
    TrainConfig train_boundary;
    double boundary_negative_ratio = 3.0;

    CannyParams canny;
    DetectParams detect;

    struct Geodesic {
        int k = 81;
        double sigma = 2.0;
        // Only sigma/step_cost is meaningful; 1.5 keeps the kernel tight
        // enough that residual band bias does not smear past the walls.
        double step_cost = 1.5;
    } geodesic;

    struct Eval {
        std::vector<double> thresholds_mm = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15};
        int boundary_margin = 5;
        double edge_tolerance = 2.0;
    } eval;

    void validate() const;
};

PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const PipelineConfig& config);
PipelineConfig load_config(const std::filesystem::path& path);

/// Applies one `--set dotted.key=value` override onto a config JSON tree.
void apply_override(nlohmann::json& tree, const std::string& assignment);

/// Generates scenes, renders, distorts, fuses references, writes all image
/// files plus the manifest; returns the manifest.
DatasetManifest cmd_simulate(const PipelineConfig& config);

/// Renders flat calibration frames through the systematic-error model,
/// fits the per-pixel linear calibration, writes calib.tfc. Returns the
/// worst absolute residual over the training frames (mm).
double cmd_fit_calib(const PipelineConfig& config);

struct TrainOutcome {
    std::vector<std::filesystem::path> model_files;
    std::vector<std::filesystem::path> log_files;
};

TrainOutcome cmd_train_range(const PipelineConfig& config);
TrainOutcome cmd_train_boundary(const PipelineConfig& config);

struct StageTiming {
    std::string stage;
    double milliseconds = 0.0;
};

struct InferOutputs {
    std::vector<StageTiming> timings;  // accumulated over processed entries
    std::filesystem::path outputs_manifest;
    int entries_processed = 0;
};

/// Runs calibrate -> F -> G -> geodesic filter over the test split (or one
/// entry) and writes R_F, edge maps, scores, and the final estimate.
InferOutputs cmd_infer(const PipelineConfig& config, std::optional<int> entry_index = std::nullopt);

/// Writes report.json plus CSV curves; returns the report.
nlohmann::json cmd_eval(const PipelineConfig& config);

}  // namespace tofclean
