#pragma once

// Toy training loop: Adam over the reconstruction loss, with deterministic
// batch selection keyed on the optimizer step so a resumed run continues the
// same sequence.

#include "rpge/grad.hpp"
#include "rpge/parallel.hpp"

#include <functional>
#include <span>
#include <vector>

namespace rpge {

struct TrainOptions {
    std::size_t steps = 2000;
    std::size_t batch_size = 4;
    double lr = 3e-3;
    std::size_t threads = 1;   // per-sample gradients within a batch
    std::size_t log_every = 1; // loss-curve stride
};

struct LossPoint {
    std::uint64_t step = 0;
    double loss = 0;
};

/// Batch for optimizer step `step` (0-based): consecutive samples modulo the pool.
inline std::vector<std::size_t> batch_indices(std::uint64_t step, std::size_t batch_size, std::size_t pool) {
    std::vector<std::size_t> idx(std::min(batch_size, pool));
    for (std::size_t j = 0; j < idx.size(); ++j) idx[j] = static_cast<std::size_t>((step * batch_size + j) % pool);
    return idx;
}

/// Batch loss and gradient with per-sample work in parallel and a fixed-order
/// reduction, so the result does not depend on the thread count.
inline LossAndGrad batch_loss_and_grad(const ParameterSet &params, std::span<const Sample> pool,
                                       std::span<const std::size_t> indices, const EncoderConfig &cfg,
                                       const BevGridSpec &grid, const SplatOptions &opt, std::size_t threads) {
    std::vector<LossAndGrad> parts(indices.size());
    parallel_for(indices.size(), threads,
                 [&](std::size_t j) { parts[j] = loss_and_grad(params, pool[indices[j]], cfg, grid, opt); });
    LossAndGrad total;
    total.grads = params.zeros_like();
    for (const auto &p : parts) {
        total.loss += p.loss;
        for (auto &[name, t] : total.grads) {
            const auto &src = p.grads[name].data;
            for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] += src[i];
        }
    }
    if (!parts.empty()) {
        const double inv = 1.0 / static_cast<double>(parts.size());
        total.loss *= inv;
        for (auto &[_, t] : total.grads)
            for (double &v : t.data) v *= inv;
    }
    return total;
}

/// Runs until `state.step` reaches `opt.steps`. Returns the loss before each
/// logged update.
inline std::vector<LossPoint> train(ParameterSet &params, AdamState &state, std::span<const Sample> pool,
                                    const EncoderConfig &cfg, const BevGridSpec &grid, const TrainOptions &opt,
                                    const SplatOptions &splat_opt = {},
                                    const std::function<void(const LossPoint &)> &on_step = {}) {
    require(!pool.empty() || opt.steps <= state.step, ErrorCode::Config, "training needs at least one sample");
    require(opt.batch_size > 0, ErrorCode::Config, "batch size must be positive");
    state.lr = opt.lr;
    std::vector<LossPoint> curve;
    const std::size_t stride = std::max<std::size_t>(opt.log_every, 1);
    while (state.step < opt.steps) {
        const auto idx = batch_indices(state.step, opt.batch_size, pool.size());
        const auto lg = batch_loss_and_grad(params, pool, idx, cfg, grid, splat_opt, opt.threads);
        const LossPoint lp{state.step, lg.loss};
        if (state.step % stride == 0) curve.push_back(lp);
        if (on_step) on_step(lp);
        adam_step(params, lg.grads, state);
    }
    return curve;
}

inline double mean_loss(const ParameterSet &params, std::span<const Sample> samples, const EncoderConfig &cfg,
                        const BevGridSpec &grid, const SplatOptions &opt = {}) {
    double sum = 0;
    for (const auto &s : samples) {
        const auto map = encode<double>(params, cfg, s.points, s.frame(), grid, opt);
        double l = 0;
        for (std::size_t i = 0; i < map.data().size(); ++i) {
            const double r = map.data()[i] - s.target.data()[i];
            l += r * r;
        }
        sum += l / static_cast<double>(map.data().size());
    }
    return samples.empty() ? 0.0 : sum / static_cast<double>(samples.size());
}

} // namespace rpge
