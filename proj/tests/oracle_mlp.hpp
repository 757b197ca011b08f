#pragma once

// Independent double-precision network evaluation used as the
// finite-difference oracle for backpropagation. Parameters live in one flat
// vector so individual components can be perturbed without touching the
// production model's float storage.

#include <cmath>
#include <span>
#include <vector>

#include "tofclean/mlp.hpp"

namespace oracle {

inline std::vector<double> flatten_params(const tofclean::MlpModel& m) {
    std::vector<double> theta;
    for (size_t l = 0; l < m.layer_count(); ++l) {
        for (float v : m.weights[l]) theta.push_back(v);
        for (float v : m.biases[l]) theta.push_back(v);
    }
    return theta;
}

inline std::vector<double> flatten_grads(const tofclean::Gradients& g) {
    std::vector<double> flat;
    for (size_t l = 0; l < g.dw.size(); ++l) {
        flat.insert(flat.end(), g.dw[l].begin(), g.dw[l].end());
        flat.insert(flat.end(), g.db[l].begin(), g.db[l].end());
    }
    return flat;
}

inline double loss_at(const std::vector<int>& sizes, tofclean::LossKind kind,
                      const std::vector<double>& theta, std::span<const float> input, double target,
                      int label) {
    std::vector<double> act(input.begin(), input.end());
    size_t off = 0;
    size_t layers = sizes.size() - 1;
    for (size_t l = 0; l < layers; ++l) {
        int in_n = sizes[l], out_n = sizes[l + 1];
        std::vector<double> next(out_n);
        for (int o = 0; o < out_n; ++o) {
            double acc = 0.0;
            for (int i = 0; i < in_n; ++i) acc += theta[off + static_cast<size_t>(o) * in_n + i] * act[i];
            next[o] = acc;
        }
        off += static_cast<size_t>(in_n) * out_n;
        for (int o = 0; o < out_n; ++o) next[o] += theta[off + o];
        off += out_n;
        if (l + 1 < layers)
            for (double& v : next)
                if (v < 0.0) v = 0.0;
        act = std::move(next);
    }
    if (kind == tofclean::LossKind::Euclidean) {
        double acc = 0.0;
        for (double v : act) {
            double d = v - target;
            acc += d * d;
        }
        return 0.5 * acc;
    }
    double mx = act[0];
    for (double v : act) mx = std::max(mx, v);
    double sum = 0.0;
    for (double v : act) sum += std::exp(v - mx);
    return mx + std::log(sum) - act[label];
}

struct FdCheck {
    double max_rel_err = 0.0;
    size_t checked = 0;
};

/// Central finite differences over every parameter; relative error against
/// the analytic gradient on components of magnitude above `floor`.
inline FdCheck compare_gradients(const tofclean::MlpModel& m, std::span<const float> input,
                                 double target, int label, tofclean::LossKind kind, double eps,
                                 double floor) {
    tofclean::MlpScratch scratch;
    tofclean::Gradients grads = tofclean::Gradients::zeros_like(m);
    tofclean::backward(m, input, {&target, 1}, label, kind, scratch, grads);
    std::vector<double> analytic = flatten_grads(grads);
    std::vector<double> theta = flatten_params(m);

    FdCheck result;
    for (size_t i = 0; i < theta.size(); ++i) {
        double keep = theta[i];
        theta[i] = keep + eps;
        double up = loss_at(m.layer_sizes, kind, theta, input, target, label);
        theta[i] = keep - eps;
        double down = loss_at(m.layer_sizes, kind, theta, input, target, label);
        theta[i] = keep;
        double fd = (up - down) / (2.0 * eps);
        if (std::fabs(analytic[i]) <= floor && std::fabs(fd) <= floor) continue;
        double rel = std::fabs(fd - analytic[i]) /
                     std::max({std::fabs(fd), std::fabs(analytic[i]), 1e-12});
        result.max_rel_err = std::max(result.max_rel_err, rel);
        ++result.checked;
    }
    return result;
}

}  // namespace oracle
