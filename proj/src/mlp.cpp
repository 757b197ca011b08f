#include "tofclean/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace tofclean {

namespace {

constexpr char kMagic[4] = {'T', 'F', 'M', '1'};
constexpr uint16_t kVersion = 1;
constexpr uint32_t kMaxLayerSize = 1u << 20;

void ensure_scratch(const MlpModel& m, MlpScratch& s) {
    size_t layers = m.layer_count();
    if (s.act.size() == layers + 1) return;
    s.act.resize(layers + 1);
    s.delta.resize(layers);
    for (size_t l = 0; l < layers; ++l) {
        s.act[l].resize(m.layer_sizes[l]);
        s.delta[l].resize(m.layer_sizes[l + 1]);
    }
    s.act[layers].resize(m.layer_sizes[layers]);
}

void affine_relu_chain(const MlpModel& m, MlpScratch& s) {
    size_t layers = m.layer_count();
    for (size_t l = 0; l < layers; ++l) {
        int in_n = m.layer_sizes[l];
        int out_n = m.layer_sizes[l + 1];
        const float* w = m.weights[l].data();
        const float* b = m.biases[l].data();
        const double* x = s.act[l].data();
        double* y = s.act[l + 1].data();
        bool hidden = l + 1 < layers;
        for (int o = 0; o < out_n; ++o) {
            double acc = b[o];
            const float* row = w + static_cast<size_t>(o) * in_n;
            for (int i = 0; i < in_n; ++i) acc += static_cast<double>(row[i]) * x[i];
            y[o] = hidden && acc < 0.0 ? 0.0 : acc;
        }
    }
}

}  // namespace

MlpModel MlpModel::init(std::vector<int> sizes, Head head, uint64_t seed) {
    if (sizes.size() < 2) throw Error(ErrorCode::InvalidArgument, "mlp: need at least input and output sizes");
    for (int s : sizes)
        if (s <= 0) throw Error(ErrorCode::InvalidArgument, "mlp: layer sizes must be positive");

    MlpModel m;
    m.layer_sizes = std::move(sizes);
    m.head = head;
    Rng rng(seed);
    for (size_t l = 0; l + 1 < m.layer_sizes.size(); ++l) {
        int in_n = m.layer_sizes[l];
        int out_n = m.layer_sizes[l + 1];
        double limit = std::sqrt(6.0 / (in_n + out_n));
        std::vector<float> w(static_cast<size_t>(in_n) * out_n);
        for (float& v : w) v = static_cast<float>(rng.uniform(-limit, limit));
        m.weights.push_back(std::move(w));
        m.biases.emplace_back(out_n, 0.f);
    }
    return m;
}

void MlpModel::validate() const {
    if (layer_sizes.size() < 2 || weights.size() != layer_sizes.size() - 1 ||
        biases.size() != weights.size())
        throw Error(ErrorCode::InvalidArgument, "mlp: inconsistent layer bookkeeping");
    for (size_t l = 0; l < weights.size(); ++l) {
        size_t expect = static_cast<size_t>(layer_sizes[l]) * layer_sizes[l + 1];
        if (weights[l].size() != expect || biases[l].size() != static_cast<size_t>(layer_sizes[l + 1]))
            throw Error(ErrorCode::InvalidArgument, "mlp: layer " + std::to_string(l) + " shape mismatch");
    }
    if (head == Head::Softmax2 && layer_sizes.back() != 2)
        throw Error(ErrorCode::InvalidArgument, "mlp: softmax2 head requires 2 output units");
}

Gradients Gradients::zeros_like(const MlpModel& m) {
    Gradients g;
    for (size_t l = 0; l < m.layer_count(); ++l) {
        g.dw.emplace_back(m.weights[l].size(), 0.0);
        g.db.emplace_back(m.biases[l].size(), 0.0);
    }
    return g;
}

void Gradients::reset() {
    for (auto& v : dw) std::fill(v.begin(), v.end(), 0.0);
    for (auto& v : db) std::fill(v.begin(), v.end(), 0.0);
}

std::span<const double> forward(const MlpModel& m, std::span<const float> input, MlpScratch& s) {
    if (static_cast<int>(input.size()) != m.input_size())
        throw Error(ErrorCode::DimMismatch, "mlp forward: input length " + std::to_string(input.size()) +
                                                " != " + std::to_string(m.input_size()));
    ensure_scratch(m, s);
    for (size_t i = 0; i < input.size(); ++i) s.act[0][i] = input[i];
    affine_relu_chain(m, s);
    return {s.act.back().data(), s.act.back().size()};
}

std::vector<double> forward(const MlpModel& m, std::span<const float> input) {
    MlpScratch s;
    auto out = forward(m, input, s);
    return {out.begin(), out.end()};
}

double euclidean_loss(std::span<const double> output, std::span<const double> target) {
    if (output.size() != target.size())
        throw Error(ErrorCode::DimMismatch, "euclidean loss: output/target length mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < output.size(); ++i) {
        double d = output[i] - target[i];
        acc += d * d;
    }
    return 0.5 * acc;
}

std::vector<double> softmax(std::span<const double> logits) {
    double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

double cross_entropy_loss(std::span<const double> logits, int label) {
    if (label < 0 || static_cast<size_t>(label) >= logits.size())
        throw Error(ErrorCode::InvalidArgument, "cross entropy: label out of range");
    double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - mx);
    return mx + std::log(sum) - logits[label];
}

double backward(const MlpModel& m, std::span<const float> input, std::span<const double> target,
                int label, LossKind kind, MlpScratch& s, Gradients& grads) {
    auto out = forward(m, input, s);
    size_t layers = m.layer_count();

    double loss;
    std::vector<double>& dout = s.delta[layers - 1];
    if (kind == LossKind::Euclidean) {
        loss = euclidean_loss(out, target);
        for (size_t i = 0; i < out.size(); ++i) dout[i] = out[i] - target[i];
    } else {
        loss = cross_entropy_loss(out, label);
        std::vector<double> p = softmax(out);
        for (size_t i = 0; i < out.size(); ++i) dout[i] = p[i] - (static_cast<int>(i) == label ? 1.0 : 0.0);
    }

    for (size_t l = layers; l-- > 0;) {
        int in_n = m.layer_sizes[l];
        int out_n = m.layer_sizes[l + 1];
        const double* d = s.delta[l].data();
        const double* x = s.act[l].data();
        double* dw = grads.dw[l].data();
        double* db = grads.db[l].data();
        for (int o = 0; o < out_n; ++o) {
            double* row = dw + static_cast<size_t>(o) * in_n;
            for (int i = 0; i < in_n; ++i) row[i] += d[o] * x[i];
            db[o] += d[o];
        }
        if (l == 0) break;
        // Propagate through the previous ReLU: zero where the unit was off
        // (pre-activation <= 0, visible as activation == 0).
        const float* w = m.weights[l].data();
        std::vector<double>& dprev = s.delta[l - 1];
        for (int i = 0; i < in_n; ++i) {
            double acc = 0.0;
            if (s.act[l][i] > 0.0) {
                for (int o = 0; o < out_n; ++o)
                    acc += static_cast<double>(w[static_cast<size_t>(o) * in_n + i]) * d[o];
            }
            dprev[i] = acc;
        }
    }
    return loss;
}

void TrainConfig::validate() const {
    if (momentum < 0.0 || momentum >= 1.0)
        throw Error(ErrorCode::InvalidArgument, "train config: momentum must be in [0,1)");
    if (batch_size < 1) throw Error(ErrorCode::InvalidArgument, "train config: batch_size must be >= 1");
    if (epochs < 0) throw Error(ErrorCode::InvalidArgument, "train config: epochs must be >= 0");
    if (!(learning_rate >= 0.0) || !(lr_decay >= 0.0))
        throw Error(ErrorCode::InvalidArgument, "train config: negative learning rate or decay");
}

TrainLog train(MlpModel& m, const SampleSet& data, const TrainConfig& config) {
    config.validate();
    m.validate();
    if (data.size() == 0) throw Error(ErrorCode::MissingData, "train: empty sample set");
    if (data.input_dim != m.input_size())
        throw Error(ErrorCode::DimMismatch, "train: sample dim != model input size");
    if (data.kind == LossKind::CrossEntropy && m.head != Head::Softmax2)
        throw Error(ErrorCode::InvalidArgument, "train: cross entropy requires a softmax2 head");

    size_t n = data.size();
    Rng rng(config.seed);
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});

    Gradients grads = Gradients::zeros_like(m);
    Gradients velocity = Gradients::zeros_like(m);
    MlpScratch scratch;
    TrainLog log;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        // Fisher-Yates, pinned to our Rng stream.
        for (size_t i = n; i-- > 1;) {
            size_t j = rng.next_u64() % (i + 1);
            std::swap(order[i], order[j]);
        }
        double lr = config.learning_rate * std::pow(config.lr_decay, epoch);

        double epoch_loss = 0.0;
        for (size_t start = 0; start < n; start += config.batch_size) {
            size_t stop = std::min(n, start + config.batch_size);
            grads.reset();
            double batch_loss = 0.0;
            for (size_t k = start; k < stop; ++k) {
                size_t idx = order[k];
                double t = data.kind == LossKind::Euclidean ? data.targets[idx] : 0.0;
                int label = data.kind == LossKind::CrossEntropy ? data.labels[idx] : 0;
                batch_loss += backward(m, data.input(idx), {&t, 1}, label, data.kind, scratch, grads);
            }
            if (!std::isfinite(batch_loss))
                throw Error(ErrorCode::NumericFailure,
                            "train: non-finite loss at epoch " + std::to_string(epoch) + ", batch offset " +
                                std::to_string(start));
            epoch_loss += batch_loss;

            double scale = lr / static_cast<double>(stop - start);
            for (size_t l = 0; l < m.layer_count(); ++l) {
                float* w = m.weights[l].data();
                double* v = velocity.dw[l].data();
                const double* g = grads.dw[l].data();
                for (size_t i = 0; i < m.weights[l].size(); ++i) {
                    v[i] = config.momentum * v[i] - scale * g[i];
                    w[i] = static_cast<float>(w[i] + v[i]);
                }
                float* b = m.biases[l].data();
                double* vb = velocity.db[l].data();
                const double* gb = grads.db[l].data();
                for (size_t i = 0; i < m.biases[l].size(); ++i) {
                    vb[i] = config.momentum * vb[i] - scale * gb[i];
                    b[i] = static_cast<float>(b[i] + vb[i]);
                }
            }
        }
        log.epoch_loss.push_back(epoch_loss / static_cast<double>(n));
    }
    return log;
}

namespace {

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<uint8_t>& out, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

class Cursor {
public:
    Cursor(std::span<const uint8_t> bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

    const uint8_t* take(size_t n) {
        if (pos_ + n > bytes_.size())
            throw Error(ErrorCode::Corruption, origin_ + ": truncated model data");
        const uint8_t* p = bytes_.data() + pos_;
        pos_ += n;
        return p;
    }

    uint16_t u16() {
        const uint8_t* p = take(2);
        return static_cast<uint16_t>(p[0] | (p[1] << 8));
    }

    uint32_t u32() {
        const uint8_t* p = take(4);
        return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
               (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
    }

    float f32() {
        uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    bool exhausted() const { return pos_ == bytes_.size(); }

private:
    std::span<const uint8_t> bytes_;
    std::string origin_;
    size_t pos_ = 0;
};

}  // namespace

std::vector<uint8_t> serialize_model(const MlpModel& m) {
    m.validate();
    std::vector<uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u16(out, kVersion);
    out.push_back(static_cast<uint8_t>(m.head));
    put_u32(out, static_cast<uint32_t>(m.layer_sizes.size()));
    for (int s : m.layer_sizes) put_u32(out, static_cast<uint32_t>(s));
    for (size_t l = 0; l < m.layer_count(); ++l) {
        for (float v : m.weights[l]) put_f32(out, v);
        for (float v : m.biases[l]) put_f32(out, v);
    }
    return out;
}

MlpModel deserialize_model(std::span<const uint8_t> bytes, const std::string& origin) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw Error(ErrorCode::BadMagic, origin + ": bad model magic");
    Cursor cur(bytes.subspan(4), origin);
    uint16_t version = cur.u16();
    if (version != kVersion)
        throw Error(ErrorCode::BadVersion, origin + ": unsupported model version " + std::to_string(version));
    uint8_t head = *cur.take(1);
    if (head > 1) throw Error(ErrorCode::Corruption, origin + ": unknown head tag");
    uint32_t count = cur.u32();
    if (count < 2 || count > 64) throw Error(ErrorCode::Corruption, origin + ": implausible layer count");

    MlpModel m;
    m.head = static_cast<Head>(head);
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t s = cur.u32();
        if (s == 0 || s > kMaxLayerSize) throw Error(ErrorCode::Corruption, origin + ": implausible layer size");
        m.layer_sizes.push_back(static_cast<int>(s));
    }
    for (size_t l = 0; l + 1 < m.layer_sizes.size(); ++l) {
        size_t wn = static_cast<size_t>(m.layer_sizes[l]) * m.layer_sizes[l + 1];
        std::vector<float> w(wn);
        for (float& v : w) v = cur.f32();
        std::vector<float> b(m.layer_sizes[l + 1]);
        for (float& v : b) v = cur.f32();
        m.weights.push_back(std::move(w));
        m.biases.push_back(std::move(b));
    }
    if (!cur.exhausted()) throw Error(ErrorCode::Corruption, origin + ": trailing bytes after model payload");
    m.validate();
    return m;
}

void save_model(const MlpModel& m, const std::filesystem::path& path) {
    std::vector<uint8_t> bytes = serialize_model(m);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Io, "write failure on " + path.string());
}

MlpModel load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_model(bytes, path.string());
}

}  // namespace tofclean
