#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "tofclean/common.hpp"

namespace tofclean {

enum class Head : uint8_t {
    Linear = 0,    // raw affine outputs (regression)
    Softmax2 = 1,  // two logits; probabilities via softmax
};

enum class LossKind : uint8_t {
    Euclidean,     // 0.5 * |y - t|^2
    CrossEntropy,  // -log softmax(logits)[label]
};

/// Dense feed-forward network: affine layers with ReLU on every hidden
/// layer and a bare affine output layer. Weights and biases are stored as
/// float32 (the serialized precision); all arithmetic runs in double.
struct MlpModel {
    std::vector<int> layer_sizes;              // input, hidden..., output
    Head head = Head::Linear;
    std::vector<std::vector<float>> weights;   // [layer][out * in], row-major
    std::vector<std::vector<float>> biases;    // [layer][out]

    /// Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases.
    static MlpModel init(std::vector<int> sizes, Head head, uint64_t seed);

    int input_size() const { return layer_sizes.front(); }
    int output_size() const { return layer_sizes.back(); }
    size_t layer_count() const { return weights.size(); }

    void validate() const;

    bool operator==(const MlpModel&) const = default;
};

/// Reusable per-thread buffers for forward/backward passes.
struct MlpScratch {
    std::vector<std::vector<double>> act;    // act[0] = input, act[L] = output
    std::vector<std::vector<double>> delta;  // backprop buffers per layer
};

/// Per-parameter gradient accumulator, same shapes as the model.
struct Gradients {
    std::vector<std::vector<double>> dw;
    std::vector<std::vector<double>> db;

    static Gradients zeros_like(const MlpModel& m);
    void reset();
};

/// Runs the network; returns the output activations (logits for Softmax2
/// heads). The result view stays valid until the next use of `scratch`.
std::span<const double> forward(const MlpModel& m, std::span<const float> input, MlpScratch& scratch);

/// Allocating convenience wrapper.
std::vector<double> forward(const MlpModel& m, std::span<const float> input);

double euclidean_loss(std::span<const double> output, std::span<const double> target);
double cross_entropy_loss(std::span<const double> logits, int label);

/// Softmax with log-sum-exp stabilization.
std::vector<double> softmax(std::span<const double> logits);

/// Forward + analytic backprop for one sample; gradients are *added* into
/// `grads`. Returns the sample loss. `target` must point at 1 value for
/// Euclidean loss; `label` is used for CrossEntropy. ReLU derivative at 0
/// is taken as 0.
double backward(const MlpModel& m, std::span<const float> input, std::span<const double> target,
                int label, LossKind kind, MlpScratch& scratch, Gradients& grads);

struct TrainConfig {
    double learning_rate = 0.01;
    double lr_decay = 0.9;   // multiplicative per epoch
    double momentum = 0.9;
    int batch_size = 500;
    int epochs = 40;
    uint64_t seed = 0;

    void validate() const;
};

/// Flat training set: n rows of `input_dim` floats plus per-row targets
/// (Euclidean) or labels (CrossEntropy).
struct SampleSet {
    int input_dim = 0;
    LossKind kind = LossKind::Euclidean;
    std::vector<float> inputs;     // n * input_dim
    std::vector<float> targets;    // n (Euclidean)
    std::vector<int32_t> labels;   // n (CrossEntropy)

    size_t size() const { return kind == LossKind::Euclidean ? targets.size() : labels.size(); }
    std::span<const float> input(size_t i) const {
        return {inputs.data() + i * static_cast<size_t>(input_dim), static_cast<size_t>(input_dim)};
    }
};

struct TrainLog {
    std::vector<double> epoch_loss;  // mean per-sample loss, one entry per epoch
};

/// SGD with momentum: v <- mu*v - lr*grad, w <- w + v, applied per batch
/// with the mean batch gradient. Deterministic given (model, data, config).
/// Throws Error(NumericFailure) on a non-finite batch loss.
TrainLog train(MlpModel& m, const SampleSet& data, const TrainConfig& config);

/// "TFM1" model file: magic, u16 version (=1), u8 head tag, u32 layer-size
/// count, u32 sizes, then per layer float32 LE weights (row-major) followed
/// by float32 LE biases. Round-trips bit-exactly.
void save_model(const MlpModel& m, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);

std::vector<uint8_t> serialize_model(const MlpModel& m);
MlpModel deserialize_model(std::span<const uint8_t> bytes, const std::string& origin);

}  // namespace tofclean
