#pragma once

// Test-only oracles, independent of the library's evaluation path: scalar
// brute-force detector math, central finite differences, and a seeded
// random-graph generator.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mab/autodiff.hpp"
#include "mab/graph.hpp"
#include "mab/rng.hpp"
#include "mab/tensor.hpp"

namespace oracle {

/// (e^(beta*x) - delta)^alpha via std::pow of std::exp, no shared code with
/// the engine's repeated-multiplication kernel.
inline double exp_affine_pow(double x, int alpha, double beta, double delta) {
    const double base = std::exp(beta * x) - delta;
    double signed_pow = std::pow(std::abs(base), alpha);
    if (base < 0.0 && alpha % 2 == 1) signed_pow = -signed_pow;
    return signed_pow;
}

/// Brute-force naive detector: elementwise transform, k x k window minimum
/// at stride 1, channel max.
inline mab::Tensor scalar_naive_detector(const mab::Tensor& img, int alpha, double beta,
                                         double delta, int k) {
    const std::size_t C = img.shape[0], H = img.shape[1], W = img.shape[2];
    mab::Tensor out = mab::Tensor::zeros({1, H - k + 1, W - k + 1});
    for (std::size_t y = 0; y + k <= H; ++y)
        for (std::size_t x = 0; x + k <= W; ++x) {
            double channel_max = -1e308;
            for (std::size_t c = 0; c < C; ++c) {
                double window_min = 1e308;
                for (int i = 0; i < k; ++i)
                    for (int j = 0; j < k; ++j)
                        window_min = std::min(
                            window_min,
                            exp_affine_pow(img.at3(c, y + i, x + j), alpha, beta, delta));
                channel_max = std::max(channel_max, window_min);
            }
            out.at3(0, y, x) = channel_max;
        }
    return out;
}

/// Brute-force robust detector: white and black branch window averages
/// multiplied, then channel max.
inline mab::Tensor scalar_robust_detector(const mab::Tensor& img, int alpha, double beta,
                                          double delta, int k) {
    const std::size_t C = img.shape[0], H = img.shape[1], W = img.shape[2];
    mab::Tensor out = mab::Tensor::zeros({1, H - k + 1, W - k + 1});
    for (std::size_t y = 0; y + k <= H; ++y)
        for (std::size_t x = 0; x + k <= W; ++x) {
            double channel_max = -1e308;
            for (std::size_t c = 0; c < C; ++c) {
                double white = 0.0, black = 0.0;
                for (int i = 0; i < k; ++i)
                    for (int j = 0; j < k; ++j) {
                        const double px = img.at3(c, y + i, x + j);
                        white += exp_affine_pow(px, alpha, beta, delta);
                        black += exp_affine_pow(px, alpha, -beta, delta);
                    }
                channel_max = std::max(channel_max, (white / (k * k)) * (black / (k * k)));
            }
            out.at3(0, y, x) = channel_max;
        }
    return out;
}

/// Central finite differences of the softmax cross-entropy loss w.r.t.
/// every parameter tensor.
inline mab::GradStore finite_diff_grads(const mab::ArchGraph& g, mab::ParamStore ps,
                                        const mab::Tensor& input, int label,
                                        double h = 1e-3) {
    auto loss_at = [&]() {
        auto acts = mab::forward_pass(g, ps, input);
        return mab::softmax_cross_entropy(acts.at(g.output_id), label);
    };
    mab::GradStore fd;
    for (auto& [id, tensors] : ps.params) {
        std::vector<mab::Tensor> grads;
        for (mab::Tensor& t : tensors) {
            mab::Tensor gt = mab::Tensor::zeros(t.shape);
            for (std::size_t i = 0; i < t.data.size(); ++i) {
                const double keep = t.data[i];
                t.data[i] = keep + h;
                const double up = loss_at();
                t.data[i] = keep - h;
                const double down = loss_at();
                t.data[i] = keep;
                gt.data[i] = (up - down) / (2.0 * h);
            }
            grads.push_back(std::move(gt));
        }
        fd.grads[id] = std::move(grads);
    }
    return fd;
}

/// Largest guarded relative error between analytic and finite-difference
/// gradients across all parameters.
inline double max_grad_rel_err(const mab::GradStore& analytic, const mab::GradStore& fd,
                               double denom_floor = 1e-2) {
    double worst = 0.0;
    for (const auto& [id, ts] : fd.grads) {
        const auto& an = analytic.grads.at(id);
        for (std::size_t k = 0; k < ts.size(); ++k)
            for (std::size_t i = 0; i < ts[k].data.size(); ++i) {
                const double a = an[k].data[i], b = ts[k].data[i];
                const double denom = std::max({std::abs(a), std::abs(b), denom_floor});
                worst = std::max(worst, std::abs(a - b) / denom);
            }
    }
    return worst;
}

inline mab::Tensor random_tensor(const mab::Shape& s, mab::Rng& rng, double lo = -1.0,
                                 double hi = 1.0) {
    mab::Tensor t = mab::Tensor::zeros(s);
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

/// Central differences are only a valid oracle away from relu/pool kinks: a
/// parameter step of h can flip an argmax or an activation sign and the
/// quotient then measures the wrong branch. Accepts a sample only when every
/// kink has margin.
inline bool fd_safe(const mab::ArchGraph& g, const mab::ParamStore& ps, const mab::Tensor& x,
                    double margin = 5e-3) {
    auto acts = mab::forward_pass(g, ps, x);
    for (const auto& [id, n] : g.nodes) {
        const auto srcs = g.inputs_of(id);
        if (n.op == mab::Op::Relu) {
            // exact zeros are stable (already clamped upstream); only
            // values hovering near the kink make FD one-sided
            for (double v : acts.at(srcs[0]).data)
                if (v != 0.0 && std::abs(v) < margin) return false;
        }
        if (n.op == mab::Op::MaxPool || n.op == mab::Op::MinPool) {
            const mab::Tensor& in = acts.at(srcs[0]);
            const mab::Tensor& out = acts.at(id);
            const int k = n.attrs.kernel;
            const int s = n.op == mab::Op::MinPool ? 1 : n.attrs.stride;
            for (std::size_t c = 0; c < out.shape[0]; ++c)
                for (std::size_t oh = 0; oh < out.shape[1]; ++oh)
                    for (std::size_t ow = 0; ow < out.shape[2]; ++ow) {
                        const double best = out.at3(c, oh, ow);
                        int at_best = 0;
                        double runner = 1e308;
                        for (int i = 0; i < k; ++i)
                            for (int j = 0; j < k; ++j) {
                                const double v = in.at3(c, oh * s + i, ow * s + j);
                                if (v == best) ++at_best;
                                else runner = std::min(runner, std::abs(v - best));
                            }
                        // ties at exact zero are clamp plateaus, not kinks
                        if (at_best > 1 && best != 0.0) return false;
                        if (runner < margin) return false;
                    }
        }
        if (n.op == mab::Op::ChannelMaxReduce) {
            const mab::Tensor& in = acts.at(srcs[0]);
            const std::size_t C = in.shape[0], plane = in.shape[1] * in.shape[2];
            if (C < 2) continue;
            for (std::size_t i = 0; i < plane; ++i) {
                double best = -1e308, runner = -1e308;
                for (std::size_t c = 0; c < C; ++c) {
                    const double v = in.data[c * plane + i];
                    if (v > best) { runner = best; best = v; }
                    else runner = std::max(runner, v);
                }
                if (best != 0.0 && best - runner < margin) return false;
            }
        }
    }
    return true;
}

/// Draws (params, input, label) combinations until the finite-difference
/// oracle is well conditioned for the graph.
inline std::tuple<mab::ParamStore, mab::Tensor, int> fd_sample(const mab::ArchGraph& g,
                                                               int classes,
                                                               std::uint64_t seed) {
    for (std::uint64_t attempt = 0;; ++attempt) {
        mab::ParamStore ps = mab::init_params(g, mab::derive_seed(seed, "fd-params", attempt));
        mab::Rng rng(mab::derive_seed(seed, "fd-input", attempt));
        mab::Tensor x = random_tensor(g.input_shape, rng);
        const int label = static_cast<int>(rng.next_below(classes));
        if (fd_safe(g, ps, x)) return {std::move(ps), std::move(x), label};
        if (attempt > 200) throw mab::Error("no well-conditioned finite-difference sample");
    }
}

/// Random small conv graph: input -> conv -> [mixed middle ops] -> flatten
/// -> dense -> output. Every graph exercises both parameterized kinds.
inline mab::ArchGraph random_graph(std::uint64_t seed, int* num_classes_out = nullptr) {
    mab::Rng rng(mab::derive_seed(seed, "random-graph"));
    mab::ArchGraph g;
    g.name = "random-" + std::to_string(seed);
    const std::size_t hw = 6 + rng.next_below(4);
    g.input_shape = {3, hw, hw};

    int next_id = 0;
    auto fresh = [&](const std::string& base) { return base + std::to_string(next_id++); };

    g.input_id = "input";
    g.nodes["input"] = {"input", mab::Op::Input, {}};
    std::string prev = "input";
    mab::Shape shape = g.input_shape;

    auto chain = [&](mab::Op op, mab::Attrs attrs, const std::string& base) {
        std::string id = fresh(base);
        g.nodes[id] = {id, op, attrs};
        g.edges.push_back({prev, id, 0});
        prev = id;
        shape = mab::infer_node_shape(g.nodes[id], {shape}, g.input_shape);
        return id;
    };

    {
        mab::Attrs a;
        a.in_channels = static_cast<int>(shape[0]);
        a.out_channels = 2 + static_cast<int>(rng.next_below(3));
        a.kernel = 2 + static_cast<int>(rng.next_below(2));
        a.stride = 1 + static_cast<int>(rng.next_below(2));
        a.padding = static_cast<int>(rng.next_below(2));
        chain(mab::Op::Conv2d, a, "conv");
    }

    const int extra = 1 + static_cast<int>(rng.next_below(3));
    for (int i = 0; i < extra; ++i) {
        switch (rng.next_below(6)) {
            case 0:
                chain(mab::Op::Relu, {}, "relu");
                break;
            case 1: {
                if (shape[1] < 3 || shape[2] < 3) break;
                mab::Attrs a;
                a.kernel = 2;
                a.stride = 1 + static_cast<int>(rng.next_below(2));
                chain(mab::Op::MaxPool, a, "maxpool");
                break;
            }
            case 2: {
                if (shape[1] < 3 || shape[2] < 3) break;
                mab::Attrs a;
                a.kernel = 2;
                a.stride = 1;
                chain(mab::Op::AvgPool, a, "avgpool");
                break;
            }
            case 3: {
                // mild exponent so finite differences stay well conditioned
                mab::Attrs a;
                a.alpha = 2;
                a.beta = 0.5;
                a.delta = 1.0;
                chain(mab::Op::ExpAffinePow, a, "exp");
                break;
            }
            case 4: {
                // skip add: node + relu(node)
                std::string base = prev;
                mab::Shape base_shape = shape;
                std::string r = fresh("relu");
                g.nodes[r] = {r, mab::Op::Relu, {}};
                g.edges.push_back({base, r, 0});
                std::string add = fresh("add");
                g.nodes[add] = {add, mab::Op::Add, {}};
                g.edges.push_back({base, add, 0});
                g.edges.push_back({r, add, 1});
                prev = add;
                shape = base_shape;
                break;
            }
            case 5:
                chain(mab::Op::Negate, {}, "negate");
                break;
        }
    }

    chain(mab::Op::Flatten, {}, "flatten");
    const int classes = 3 + static_cast<int>(rng.next_below(3));
    {
        mab::Attrs a;
        a.in_features = static_cast<int>(shape[0]);
        a.out_features = classes;
        chain(mab::Op::Dense, a, "fc");
    }
    std::string out = fresh("output");
    g.nodes[out] = {out, mab::Op::Output, {}};
    g.edges.push_back({prev, out, 0});
    g.output_id = out;
    if (num_classes_out) *num_classes_out = classes;
    return g;
}

}  // namespace oracle
