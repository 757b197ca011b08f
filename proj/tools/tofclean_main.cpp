#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tofclean/pipeline.hpp"

namespace {

// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
int exit_code_for(const tofclean::Error& e) {
    switch (e.code()) {
        case tofclean::ErrorCode::InvalidArgument:
            return 2;
        case tofclean::ErrorCode::NumericFailure:
            return 4;
        default:
            return 3;
    }
}

tofclean::PipelineConfig resolve_config(const std::string& config_path,
                                        const std::vector<std::string>& overrides) {
    nlohmann::json tree = nlohmann::json::object();
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw tofclean::Error(tofclean::ErrorCode::InvalidArgument,
                                       "cannot open config file " + config_path);
        try {
            in >> tree;
        } catch (const nlohmann::json::exception& e) {
            throw tofclean::Error(tofclean::ErrorCode::InvalidArgument,
                                  config_path + ": bad JSON: " + e.what());
        }
    }
    for (const std::string& assignment : overrides) tofclean::apply_override(tree, assignment);
    return tofclean::config_from_json(tree);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ToF multipath-distortion removal pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "pipeline configuration JSON file");
    app.add_option("--set", overrides, "override a config value, e.g. --set simulate.train_scenes=4");

    auto* sim = app.add_subcommand("simulate", "generate the synthetic dataset and manifest");
    auto* fit = app.add_subcommand("fit-calib", "fit the per-pixel calibration model");
    auto* train = app.add_subcommand("train", "train the range or boundary networks");
    std::string target = "range";
    train->add_option("--target", target, "range | boundary")->check(CLI::IsMember({"range", "boundary"}));
    auto* infer = app.add_subcommand("infer", "run calibrate -> range NN -> boundary NN -> geodesic filter");
    int entry_index = -1;
    infer->add_option("--index", entry_index, "process a single test entry instead of all");
    auto* eval = app.add_subcommand("eval", "evaluate accuracy curves and edge precision/recall");

    CLI11_PARSE(app, argc, argv);

    try {
        tofclean::PipelineConfig config = resolve_config(config_path, overrides);
        if (sim->parsed()) {
            tofclean::DatasetManifest manifest = tofclean::cmd_simulate(config);
            std::cout << "wrote " << manifest.train.size() << " train + " << manifest.test.size()
                      << " test entries under " << config.paths.dataset << "\n";
        } else if (fit->parsed()) {
            double worst = tofclean::cmd_fit_calib(config);
            std::cout << "calibration fitted; worst training-frame residual " << worst << " mm\n";
        } else if (train->parsed()) {
            tofclean::TrainOutcome outcome = target == "range" ? tofclean::cmd_train_range(config)
                                                               : tofclean::cmd_train_boundary(config);
            for (const auto& p : outcome.model_files) std::cout << "wrote " << p.string() << "\n";
        } else if (infer->parsed()) {
            std::optional<int> index;
            if (entry_index >= 0) index = entry_index;
            tofclean::InferOutputs outputs = tofclean::cmd_infer(config, index);
            std::cout << "wrote " << outputs.outputs_manifest.string() << "\n";
        } else if (eval->parsed()) {
            nlohmann::json report = tofclean::cmd_eval(config);
            std::cout << "relative improvement at 5 mm vs calibrated: "
                      << report["relative_improvement_at_5mm"]["vs_calibrated"].get<double>()
                      << "\nedge detector best F1: "
                      << report["edge_detector"]["nn"]["best_f1"].get<double>() << "\n";
        }
    } catch (const tofclean::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
