#include "mab/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "mab/rng.hpp"

namespace mab {

namespace {

// integer power by repeated multiplication; exact semantics for negative
// bases, which fractional pow would reject
double powi(double x, int n) {
    double r = 1.0;
    for (int i = 0; i < n; ++i) r *= x;
    return r;
}

struct AdaptiveWindow {
    std::size_t lo, hi;  // [lo, hi)
};

AdaptiveWindow adaptive_window(std::size_t i, std::size_t in, std::size_t out) {
    return {(i * in) / out, ((i + 1) * in + out - 1) / out};
}

}  // namespace

std::vector<Shape> param_shapes(const Node& n) {
    switch (n.op) {
        case Op::Conv2d:
            return {{static_cast<std::size_t>(n.attrs.out_channels),
                     static_cast<std::size_t>(n.attrs.in_channels),
                     static_cast<std::size_t>(n.attrs.kernel),
                     static_cast<std::size_t>(n.attrs.kernel)},
                    {static_cast<std::size_t>(n.attrs.out_channels)}};
        case Op::Dense:
            return {{static_cast<std::size_t>(n.attrs.out_features),
                     static_cast<std::size_t>(n.attrs.in_features)},
                    {static_cast<std::size_t>(n.attrs.out_features)}};
        default:
            return {};
    }
}

ParamStore init_params(const ArchGraph& g, std::uint64_t seed) {
    ParamStore ps;
    ps.rng_seed = seed;
    Rng rng(derive_seed(seed, "param-init"));
    for (const auto& [id, n] : g.nodes) {  // std::map: sorted id order
        if (!parameterized(n.op)) continue;
        double fan_in = n.op == Op::Conv2d
                            ? static_cast<double>(n.attrs.in_channels) * n.attrs.kernel * n.attrs.kernel
                            : static_cast<double>(n.attrs.in_features);
        double bound = std::sqrt(6.0 / fan_in);
        std::vector<Tensor> ts;
        for (const Shape& s : param_shapes(n)) {
            Tensor t = Tensor::zeros(s);
            for (double& v : t.data) v = rng.uniform(-bound, bound);
            ts.push_back(std::move(t));
        }
        ps.params[id] = std::move(ts);
    }
    return ps;
}

ParamStore zeros_like(const ParamStore& p) {
    ParamStore z;
    z.rng_seed = p.rng_seed;
    for (const auto& [id, ts] : p.params) {
        std::vector<Tensor> zs;
        for (const Tensor& t : ts) zs.push_back(Tensor::zeros(t.shape));
        z.params[id] = std::move(zs);
    }
    return z;
}

namespace {

/// Patch matrix for convolution: row n = the receptive field of output cell
/// n, flattened as (ic, kh, kw). Padded taps are zero. With rows contiguous,
/// forward and backward reduce to long dot products and axpys.
std::vector<double> im2col(const Tensor& x, int IC, int K, int S, int P, int OH, int OW) {
    const int H = static_cast<int>(x.shape[1]), W = static_cast<int>(x.shape[2]);
    const std::size_t patch = static_cast<std::size_t>(IC) * K * K;
    std::vector<double> cols(static_cast<std::size_t>(OH) * OW * patch, 0.0);
    for (int oh = 0; oh < OH; ++oh)
        for (int ow = 0; ow < OW; ++ow) {
            double* row = &cols[(static_cast<std::size_t>(oh) * OW + ow) * patch];
            for (int ic = 0; ic < IC; ++ic) {
                const double* xc = &x.data[static_cast<std::size_t>(ic) * H * W];
                for (int kh = 0; kh < K; ++kh) {
                    const int ih = oh * S + kh - P;
                    if (ih < 0 || ih >= H) continue;
                    for (int kw = 0; kw < K; ++kw) {
                        const int iw = ow * S + kw - P;
                        if (iw < 0 || iw >= W) continue;
                        row[(ic * K + kh) * K + kw] = xc[ih * W + iw];
                    }
                }
            }
        }
    return cols;
}

Tensor eval_conv2d(const Node& n, const Tensor& kernel, const Tensor& bias, const Tensor& x) {
    const int IC = n.attrs.in_channels, OC = n.attrs.out_channels;
    const int K = n.attrs.kernel, S = n.attrs.stride, P = n.attrs.padding;
    const int H = static_cast<int>(x.shape[1]), W = static_cast<int>(x.shape[2]);
    const int OH = (H + 2 * P - K) / S + 1, OW = (W + 2 * P - K) / S + 1;
    const std::size_t patch = static_cast<std::size_t>(IC) * K * K;
    const std::vector<double> cols = im2col(x, IC, K, S, P, OH, OW);

    Tensor y = Tensor::zeros({static_cast<std::size_t>(OC), static_cast<std::size_t>(OH),
                              static_cast<std::size_t>(OW)});
    const int N = OH * OW;
    for (int oc = 0; oc < OC; ++oc) {
        const double* wrow = &kernel.data[static_cast<std::size_t>(oc) * patch];
        double* yc = &y.data[static_cast<std::size_t>(oc) * N];
        const double b = bias.data[static_cast<std::size_t>(oc)];
        for (int nidx = 0; nidx < N; ++nidx) {
            const double* crow = &cols[static_cast<std::size_t>(nidx) * patch];
            double acc = b;
            for (std::size_t k = 0; k < patch; ++k) acc += wrow[k] * crow[k];
            yc[nidx] = acc;
        }
    }
    return y;
}

Tensor eval_dense(const Tensor& weight, const Tensor& bias, const Tensor& x) {
    const std::size_t out = weight.shape[0], in = weight.shape[1];
    Tensor y = Tensor::zeros({out});
    for (std::size_t o = 0; o < out; ++o) {
        const double* wr = &weight.data[o * in];
        double acc = bias.data[o];
        for (std::size_t i = 0; i < in; ++i) acc += wr[i] * x.data[i];
        y.data[o] = acc;
    }
    return y;
}

template <typename Fold>
Tensor eval_pool(const Tensor& x, int k, int s, double init, Fold fold, bool average) {
    const std::size_t C = x.shape[0], H = x.shape[1], W = x.shape[2];
    const std::size_t OH = (H - k) / s + 1, OW = (W - k) / s + 1;
    Tensor y = Tensor::zeros({C, OH, OW});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t oh = 0; oh < OH; ++oh)
            for (std::size_t ow = 0; ow < OW; ++ow) {
                double acc = init;
                for (int i = 0; i < k; ++i)
                    for (int j = 0; j < k; ++j)
                        acc = fold(acc, x.at3(c, oh * s + i, ow * s + j));
                y.at3(c, oh, ow) = average ? acc / (k * k) : acc;
            }
    return y;
}

template <typename Fold>
Tensor eval_adaptive(const Tensor& x, int out_h, int out_w, double init, Fold fold, bool average) {
    const std::size_t C = x.shape[0], H = x.shape[1], W = x.shape[2];
    const std::size_t OH = static_cast<std::size_t>(out_h), OW = static_cast<std::size_t>(out_w);
    Tensor y = Tensor::zeros({C, OH, OW});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t oh = 0; oh < OH; ++oh) {
            auto [h0, h1] = adaptive_window(oh, H, OH);
            for (std::size_t ow = 0; ow < OW; ++ow) {
                auto [w0, w1] = adaptive_window(ow, W, OW);
                double acc = init;
                for (std::size_t i = h0; i < h1; ++i)
                    for (std::size_t j = w0; j < w1; ++j) acc = fold(acc, x.at3(c, i, j));
                y.at3(c, oh, ow) =
                    average ? acc / (static_cast<double>(h1 - h0) * (w1 - w0)) : acc;
            }
        }
    return y;
}

constexpr double kNegInf = -1.7976931348623157e308;
constexpr double kPosInf = 1.7976931348623157e308;

Tensor eval_binary(const Node& n, const Tensor& a, const Tensor& b) {
    const bool mul = n.op == Op::Multiply;
    if (a.shape == b.shape) {
        Tensor y = a;
        for (std::size_t i = 0; i < y.data.size(); ++i)
            y.data[i] = mul ? a.data[i] * b.data[i] : a.data[i] + b.data[i];
        return y;
    }
    // channel broadcast: 1xHxW against CxHxW
    const Tensor& wide = a.shape[0] == 1 ? b : a;
    const Tensor& narrow = a.shape[0] == 1 ? a : b;
    Tensor y = wide;
    const std::size_t plane = wide.shape[1] * wide.shape[2];
    for (std::size_t c = 0; c < wide.shape[0]; ++c)
        for (std::size_t i = 0; i < plane; ++i) {
            const double lhs = wide.data[c * plane + i], rhs = narrow.data[i];
            y.data[c * plane + i] = mul ? lhs * rhs : lhs + rhs;
        }
    return y;
}

}  // namespace

Tensor evaluate_node(const Node& n, const std::vector<const Tensor*>& params,
                     const std::vector<const Tensor*>& inputs) {
    if (parameterized(n.op) != !params.empty())
        throw Error("node '" + n.id + "': parameters " +
                    (params.empty() ? "missing" : "unexpected"));
    std::vector<Shape> in_shapes;
    for (const Tensor* t : inputs) in_shapes.push_back(t->shape);
    infer_node_shape(n, in_shapes, in_shapes.empty() ? Shape{} : in_shapes[0]);

    Tensor y;
    switch (n.op) {
        case Op::Input:
        case Op::Output:
            y = inputs.empty() ? Tensor{} : *inputs[0];
            break;
        case Op::Conv2d:
            y = eval_conv2d(n, *params[0], *params[1], *inputs[0]);
            break;
        case Op::Dense:
            y = eval_dense(*params[0], *params[1], *inputs[0]);
            break;
        case Op::Relu: {
            y = *inputs[0];
            for (double& v : y.data) v = v > 0.0 ? v : 0.0;
            break;
        }
        case Op::Negate: {
            y = *inputs[0];
            for (double& v : y.data) v = -v;
            break;
        }
        case Op::ExpAffinePow: {
            y = *inputs[0];
            const double beta = n.attrs.beta, delta = n.attrs.delta;
            const int alpha = n.attrs.alpha;
            for (double& v : y.data) v = powi(std::exp(beta * v) - delta, alpha);
            break;
        }
        case Op::MaxPool:
            y = eval_pool(*inputs[0], n.attrs.kernel, n.attrs.stride, kNegInf,
                          [](double a, double b) { return a > b ? a : b; }, false);
            break;
        case Op::MinPool:
            y = eval_pool(*inputs[0], n.attrs.kernel, 1, kPosInf,
                          [](double a, double b) { return a < b ? a : b; }, false);
            break;
        case Op::AvgPool:
            y = eval_pool(*inputs[0], n.attrs.kernel, n.attrs.stride, 0.0,
                          [](double a, double b) { return a + b; }, true);
            break;
        case Op::AdaptiveAvgPool:
            y = eval_adaptive(*inputs[0], n.attrs.out_h, n.attrs.out_w, 0.0,
                              [](double a, double b) { return a + b; }, true);
            break;
        case Op::AdaptiveMaxPool:
            y = eval_adaptive(*inputs[0], n.attrs.out_h, n.attrs.out_w, kNegInf,
                              [](double a, double b) { return a > b ? a : b; }, false);
            break;
        case Op::ChannelMaxReduce: {
            const Tensor& x = *inputs[0];
            const std::size_t C = x.shape[0], plane = x.shape[1] * x.shape[2];
            y = Tensor::zeros({1, x.shape[1], x.shape[2]});
            for (std::size_t i = 0; i < plane; ++i) {
                double m = x.data[i];
                for (std::size_t c = 1; c < C; ++c) m = std::max(m, x.data[c * plane + i]);
                y.data[i] = m;
            }
            break;
        }
        case Op::Add:
        case Op::Multiply:
            y = eval_binary(n, *inputs[0], *inputs[1]);
            break;
        case Op::Flatten: {
            y = *inputs[0];
            y.shape = {y.data.size()};
            break;
        }
    }
    require_finite(y, "output of node '" + n.id + "'");
    return y;
}

std::map<std::string, Tensor> forward_pass(const ArchGraph& g, const ParamStore& ps,
                                           const Tensor& input) {
    if (input.shape != g.input_shape)
        throw ShapeError("input shape " + shape_str(input.shape) +
                         " does not match graph input " + shape_str(g.input_shape));
    std::map<std::string, Tensor> acts;
    for (const auto& id : topo_order(g)) {
        const Node& n = g.node(id);
        if (n.op == Op::Input) {
            acts[id] = input;
            continue;
        }
        std::vector<const Tensor*> in;
        for (const auto& src : g.inputs_of(id)) in.push_back(&acts.at(src));
        std::vector<const Tensor*> prm;
        if (parameterized(n.op)) {
            auto it = ps.params.find(id);
            if (it == ps.params.end()) throw Error("missing parameters for node '" + id + "'");
            for (const Tensor& t : it->second) prm.push_back(&t);
        }
        acts[id] = evaluate_node(n, prm, in);
    }
    return acts;
}

double softmax_cross_entropy(const Tensor& logits, int label) {
    double mx = logits.data[0];
    for (double v : logits.data) mx = std::max(mx, v);
    double lse = 0.0;
    for (double v : logits.data) lse += std::exp(v - mx);
    return std::log(lse) + mx - logits.data[static_cast<std::size_t>(label)];
}

Tensor softmax_cross_entropy_grad(const Tensor& logits, int label) {
    double mx = logits.data[0];
    for (double v : logits.data) mx = std::max(mx, v);
    double lse = 0.0;
    for (double v : logits.data) lse += std::exp(v - mx);
    Tensor g = logits;
    for (double& v : g.data) v = std::exp(v - mx) / lse;
    g.data[static_cast<std::size_t>(label)] -= 1.0;
    return g;
}

namespace {

// gradients of one node: fills grad_inputs (slot order) and grad_params
void backward_node(const Node& n, const std::vector<const Tensor*>& params,
                   const std::vector<const Tensor*>& inputs, const Tensor& output,
                   const Tensor& gout, std::vector<Tensor>& grad_inputs,
                   std::vector<Tensor>& grad_params) {
    grad_inputs.clear();
    grad_params.clear();
    switch (n.op) {
        case Op::Input:
            break;
        case Op::Output:
            grad_inputs.push_back(gout);
            break;
        case Op::Conv2d: {
            const Tensor& x = *inputs[0];
            const Tensor& kernel = *params[0];
            const int IC = n.attrs.in_channels, OC = n.attrs.out_channels;
            const int K = n.attrs.kernel, S = n.attrs.stride, P = n.attrs.padding;
            const int H = static_cast<int>(x.shape[1]), W = static_cast<int>(x.shape[2]);
            const int OH = static_cast<int>(output.shape[1]), OW = static_cast<int>(output.shape[2]);
            const int N = OH * OW;
            const std::size_t patch = static_cast<std::size_t>(IC) * K * K;
            const std::vector<double> cols = im2col(x, IC, K, S, P, OH, OW);

            Tensor gw = Tensor::zeros(kernel.shape);
            Tensor gb = Tensor::zeros(params[1]->shape);
            std::vector<double> gcols(cols.size(), 0.0);
            for (int oc = 0; oc < OC; ++oc) {
                const double* gc = &gout.data[static_cast<std::size_t>(oc) * N];
                const double* wrow = &kernel.data[static_cast<std::size_t>(oc) * patch];
                double* gwrow = &gw.data[static_cast<std::size_t>(oc) * patch];
                double bacc = 0.0;
                for (int nidx = 0; nidx < N; ++nidx) {
                    const double g = gc[nidx];
                    bacc += g;
                    if (g == 0.0) continue;
                    const double* crow = &cols[static_cast<std::size_t>(nidx) * patch];
                    double* gcrow = &gcols[static_cast<std::size_t>(nidx) * patch];
                    for (std::size_t k = 0; k < patch; ++k) {
                        gwrow[k] += g * crow[k];
                        gcrow[k] += g * wrow[k];
                    }
                }
                gb.data[static_cast<std::size_t>(oc)] = bacc;
            }

            // scatter patch gradients back onto the input (col2im)
            Tensor gx = Tensor::zeros(x.shape);
            for (int oh = 0; oh < OH; ++oh)
                for (int ow = 0; ow < OW; ++ow) {
                    const double* gcrow = &gcols[(static_cast<std::size_t>(oh) * OW + ow) * patch];
                    for (int ic = 0; ic < IC; ++ic) {
                        double* gxc = &gx.data[static_cast<std::size_t>(ic) * H * W];
                        for (int kh = 0; kh < K; ++kh) {
                            const int ih = oh * S + kh - P;
                            if (ih < 0 || ih >= H) continue;
                            for (int kw = 0; kw < K; ++kw) {
                                const int iw = ow * S + kw - P;
                                if (iw < 0 || iw >= W) continue;
                                gxc[ih * W + iw] += gcrow[(ic * K + kh) * K + kw];
                            }
                        }
                    }
                }
            grad_inputs.push_back(std::move(gx));
            grad_params.push_back(std::move(gw));
            grad_params.push_back(std::move(gb));
            break;
        }
        case Op::Dense: {
            const Tensor& x = *inputs[0];
            const Tensor& weight = *params[0];
            const std::size_t out = weight.shape[0], in = weight.shape[1];
            Tensor gx = Tensor::zeros(x.shape);
            Tensor gw = Tensor::zeros(weight.shape);
            for (std::size_t o = 0; o < out; ++o) {
                const double go = gout.data[o];
                const double* wr = &weight.data[o * in];
                double* gwr = &gw.data[o * in];
                for (std::size_t i = 0; i < in; ++i) {
                    gwr[i] = go * x.data[i];
                    gx.data[i] += go * wr[i];
                }
            }
            grad_inputs.push_back(std::move(gx));
            grad_params.push_back(std::move(gw));
            grad_params.push_back(gout);  // bias grad equals upstream grad
            break;
        }
        case Op::Relu: {
            const Tensor& x = *inputs[0];
            Tensor gx = gout;
            for (std::size_t i = 0; i < gx.data.size(); ++i)
                if (x.data[i] <= 0.0) gx.data[i] = 0.0;
            grad_inputs.push_back(std::move(gx));
            break;
        }
        case Op::Negate: {
            Tensor gx = gout;
            for (double& v : gx.data) v = -v;
            grad_inputs.push_back(std::move(gx));
            break;
        }
        case Op::ExpAffinePow: {
            const Tensor& x = *inputs[0];
            Tensor gx = gout;
            const double beta = n.attrs.beta, delta = n.attrs.delta;
            const int alpha = n.attrs.alpha;
            for (std::size_t i = 0; i < gx.data.size(); ++i) {
                const double e = std::exp(beta * x.data[i]);
                gx.data[i] *= alpha * powi(e - delta, alpha - 1) * beta * e;
            }
            grad_inputs.push_back(std::move(gx));
            break;
        }
        case Op::MaxPool:
        case Op::MinPool: {
            const Tensor& x = *inputs[0];
            const bool is_min = n.op == Op::MinPool;
            const int k = n.attrs.kernel, s = is_min ? 1 : n.attrs.stride;
            const std::size_t C = x.shape[0];
            const std::size_t OH = output.shape[1], OW = output.shape[2];
            Tensor gx = Tensor::zeros(x.shape);
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t oh = 0; oh < OH; ++oh)
                    for (std::size_t ow = 0; ow < OW; ++ow) {
                        std::size_t bi = oh * s, bj = ow * s;
                        double best = x.at3(c, bi, bj);
                        for (int i = 0; i < k; ++i)
                            for (int j = 0; j < k; ++j) {
                                const double v = x.at3(c, oh * s + i, ow * s + j);
                                if (is_min ? v < best : v > best) {
                                    best = v;
                                    bi = oh * s + i;
                                    bj = ow * s + j;
                                }
                            }
                        gx.at3(c, bi, bj) += gout.at3(c, oh, ow);
                    }
            grad_inputs.push_back(std::move(gx));
            break;
        }
        case Op::AvgPool: {
            const Tensor& x = *inputs[0];
            const int k = n.attrs.kernel, s = n.attrs.stride;
            const std::size_t C = x.shape[0], OH = output.shape[1], OW = output.shape[2];
            const double inv = 1.0 / (k * k);
            Tensor gx = Tensor::zeros(x.shape);
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t oh = 0; oh < OH; ++oh)
                    for (std::size_t ow = 0; ow < OW; ++ow) {
                        const double g = gout.at3(c, oh, ow) * inv;
                        for (int i = 0; i < k; ++i)
                            for (int j = 0; j < k; ++j) gx.at3(c, oh * s + i, ow * s + j) += g;
                    }
            grad_inputs.push_back(std::move(gx));
            break;
        }
        case Op::AdaptiveAvgPool: {
            const Tensor& x = *inputs[0];
            const std::size_t C = x.shape[0], H = x.shape[1], W = x.shape[2];
            const std::size_t OH = output.shape[1], OW = output.shape[2];
            Tensor gx = Tensor::zeros(x.shape);
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t oh = 0; oh < OH; ++oh) {
                    auto [h0, h1] = adaptive_window(oh, H, OH);
                    for (std::size_t ow = 0; ow < OW; ++ow) {
                        auto [w0, w1] = adaptive_window(ow, W, OW);
                        const double g = gout.at3(c, oh, ow) /
                                         (static_cast<double>(h1 - h0) * (w1 - w0));
                        for (std::size_t i = h0; i < h1; ++i)
                            for (std::size_t j = w0; j < w1; ++j) gx.at3(c, i, j) += g;
                    }
                }
            grad_inputs.push_back(std::move(gx));
            break;
        }
        case Op::AdaptiveMaxPool: {
            const Tensor& x = *inputs[0];
            const std::size_t C = x.shape[0], H = x.shape[1], W = x.shape[2];
            const std::size_t OH = output.shape[1], OW = output.shape[2];
            Tensor gx = Tensor::zeros(x.shape);
            for (std::size_t c = 0; c < C; ++c)
                for (std::size_t oh = 0; oh < OH; ++oh) {
                    auto [h0, h1] = adaptive_window(oh, H, OH);
                    for (std::size_t ow = 0; ow < OW; ++ow) {
                        auto [w0, w1] = adaptive_window(ow, W, OW);
                        std::size_t bi = h0, bj = w0;
                        double best = x.at3(c, h0, w0);
                        for (std::size_t i = h0; i < h1; ++i)
                            for (std::size_t j = w0; j < w1; ++j)
                                if (x.at3(c, i, j) > best) {
                                    best = x.at3(c, i, j);
                                    bi = i;
                                    bj = j;
                                }
                        gx.at3(c, bi, bj) += gout.at3(c, oh, ow);
                    }
                }
            grad_inputs.push_back(std::move(gx));
            break;
        }
        case Op::ChannelMaxReduce: {
            const Tensor& x = *inputs[0];
            const std::size_t C = x.shape[0], plane = x.shape[1] * x.shape[2];
            Tensor gx = Tensor::zeros(x.shape);
            for (std::size_t i = 0; i < plane; ++i) {
                std::size_t bc = 0;
                double best = x.data[i];
                for (std::size_t c = 1; c < C; ++c)
                    if (x.data[c * plane + i] > best) {
                        best = x.data[c * plane + i];
                        bc = c;
                    }
                gx.data[bc * plane + i] = gout.data[i];
            }
            grad_inputs.push_back(std::move(gx));
            break;
        }
        case Op::Add:
        case Op::Multiply: {
            const Tensor& a = *inputs[0];
            const Tensor& b = *inputs[1];
            const bool mul = n.op == Op::Multiply;
            auto grad_for = [&](const Tensor& self, const Tensor& other) {
                Tensor g = Tensor::zeros(self.shape);
                const std::size_t plane = output.shape.size() == 3
                                              ? output.shape[1] * output.shape[2]
                                              : output.data.size();
                const bool self_narrow = self.shape != output.shape;
                const bool other_narrow = other.shape != output.shape;
                for (std::size_t i = 0; i < output.data.size(); ++i) {
                    const double chain =
                        mul ? gout.data[i] * other.data[other_narrow ? i % plane : i]
                            : gout.data[i];
                    g.data[self_narrow ? i % plane : i] += chain;
                }
                return g;
            };
            grad_inputs.push_back(grad_for(a, b));
            grad_inputs.push_back(grad_for(b, a));
            break;
        }
        case Op::Flatten: {
            Tensor gx = gout;
            gx.shape = inputs[0]->shape;
            grad_inputs.push_back(std::move(gx));
            break;
        }
    }
}

}  // namespace

GradStore backward_pass(const ArchGraph& g, const ParamStore& ps,
                        const std::map<std::string, Tensor>& acts, int label, double* loss_out) {
    const Tensor& logits = acts.at(g.output_id);
    if (loss_out) *loss_out = softmax_cross_entropy(logits, label);

    std::map<std::string, Tensor> gacts;
    gacts[g.output_id] = softmax_cross_entropy_grad(logits, label);

    GradStore gs;
    auto order = topo_order(g);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const std::string& id = *it;
        const Node& n = g.node(id);
        auto git = gacts.find(id);
        if (git == gacts.end()) continue;  // no consumer contributed gradient
        const Tensor& gout = git->second;

        std::vector<const Tensor*> in;
        std::vector<std::string> srcs = g.inputs_of(id);
        for (const auto& src : srcs) in.push_back(&acts.at(src));
        std::vector<const Tensor*> prm;
        if (parameterized(n.op))
            for (const Tensor& t : ps.params.at(id)) prm.push_back(&t);

        std::vector<Tensor> gin, gprm;
        backward_node(n, prm, in, acts.at(id), gout, gin, gprm);

        if (!gprm.empty()) {
            for (const Tensor& t : gprm)
                require_finite(t, "gradient of node '" + id + "'");
            gs.grads[id] = std::move(gprm);
        }
        for (std::size_t s = 0; s < gin.size(); ++s) {
            const std::string& src = srcs[s];
            auto [slot, inserted] = gacts.try_emplace(src, std::move(gin[s]));
            if (!inserted) {
                Tensor& acc = slot->second;
                for (std::size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += gin[s].data[i];
            }
        }
    }
    return gs;
}

GradStore backward_pass(const ArchGraph& g, const ParamStore& ps, const Tensor& input,
                        int label) {
    auto acts = forward_pass(g, ps, input);
    return backward_pass(g, ps, acts, label, nullptr);
}

void accumulate(GradStore& dst, const GradStore& src) {
    for (const auto& [id, ts] : src.grads) {
        auto it = dst.grads.find(id);
        if (it == dst.grads.end()) {
            dst.grads[id] = ts;
            continue;
        }
        for (std::size_t k = 0; k < ts.size(); ++k)
            for (std::size_t i = 0; i < ts[k].data.size(); ++i)
                it->second[k].data[i] += ts[k].data[i];
    }
}

void scale(GradStore& g, double factor) {
    for (auto& [id, ts] : g.grads)
        for (Tensor& t : ts)
            for (double& v : t.data) v *= factor;
}

void sgd_step(ParamStore& params, const GradStore& grads, double lr, double momentum,
              ParamStore& velocity) {
    for (auto& [id, ts] : params.params) {
        auto git = grads.grads.find(id);
        if (git == grads.grads.end()) continue;
        auto& vel = velocity.params.at(id);
        for (std::size_t k = 0; k < ts.size(); ++k) {
            if (ts[k].shape != git->second[k].shape)
                throw ShapeError("gradient shape mismatch at node '" + id + "'");
            for (std::size_t i = 0; i < ts[k].data.size(); ++i) {
                vel[k].data[i] = momentum * vel[k].data[i] + git->second[k].data[i];
                ts[k].data[i] -= lr * vel[k].data[i];
            }
        }
    }
}

}  // namespace mab
