#include "mab/detector.hpp"

#include <algorithm>
#include <limits>
#include <queue>

namespace mab {

const char* detector_mode_tag(DetectorMode m) {
    return m == DetectorMode::Naive ? "naive" : "robust";
}

std::optional<DetectorMode> detector_mode_from_tag(const std::string& tag) {
    if (tag == "naive") return DetectorMode::Naive;
    if (tag == "robust") return DetectorMode::Robust;
    return std::nullopt;
}

namespace {

Tensor run_op(const std::string& id, Op op, Attrs attrs, const Tensor& a) {
    Node n{id, op, attrs};
    return evaluate_node(n, {}, {&a});
}

Tensor run_op2(const std::string& id, Op op, const Tensor& a, const Tensor& b) {
    Node n{id, op, {}};
    return evaluate_node(n, {}, {&a, &b});
}

Attrs exp_attrs(const DetectorConfig& cfg, double beta) {
    Attrs a;
    a.alpha = cfg.alpha;
    a.beta = beta;
    a.delta = cfg.delta;
    return a;
}

void check_image(const Tensor& image, const DetectorConfig& cfg) {
    if (image.shape.size() != 3)
        throw ShapeError("detector expects a CxHxW image, got " + shape_str(image.shape));
    if (cfg.alpha < 1) throw Error("detector alpha must be a positive integer");
    if (cfg.window < 1 || image.shape[1] < static_cast<std::size_t>(cfg.window) ||
        image.shape[2] < static_cast<std::size_t>(cfg.window))
        throw ShapeError("detector window does not fit the image");
}

}  // namespace

namespace {

void record(DetectorTrace* trace, const char* stage, const Tensor& t) {
    if (trace) trace->emplace_back(stage, t);
}

}  // namespace

Tensor naive_detector(const Tensor& image, const DetectorConfig& cfg, DetectorTrace* trace) {
    check_image(image, cfg);
    Attrs pool;
    pool.kernel = cfg.window;
    Tensor y = run_op("det_exp", Op::ExpAffinePow, exp_attrs(cfg, cfg.beta), image);
    record(trace, "exp-affine-pow", y);
    y = run_op("det_minpool", Op::MinPool, pool, y);
    record(trace, "min-pool", y);
    y = run_op("det_cmr", Op::ChannelMaxReduce, {}, y);
    record(trace, "channel-max", y);
    return y;
}

Tensor naive_detector(const Tensor& image, const DetectorConfig& cfg) {
    return naive_detector(image, cfg, nullptr);
}

Tensor robust_detector(const Tensor& image, const DetectorConfig& cfg, DetectorTrace* trace) {
    check_image(image, cfg);
    Attrs pool;
    pool.kernel = cfg.window;
    pool.stride = 1;
    Tensor white = run_op("det_white", Op::ExpAffinePow, exp_attrs(cfg, cfg.beta), image);
    record(trace, "white-exp", white);
    white = run_op("det_white_avg", Op::AvgPool, pool, white);
    record(trace, "white-avg", white);
    Tensor black = run_op("det_black", Op::ExpAffinePow, exp_attrs(cfg, -cfg.beta), image);
    record(trace, "black-exp", black);
    black = run_op("det_black_avg", Op::AvgPool, pool, black);
    record(trace, "black-avg", black);
    Tensor prod = run_op2("det_prod", Op::Multiply, white, black);
    record(trace, "product", prod);
    prod = run_op("det_cmr", Op::ChannelMaxReduce, {}, prod);
    record(trace, "channel-max", prod);
    return prod;
}

Tensor robust_detector(const Tensor& image, const DetectorConfig& cfg) {
    return robust_detector(image, cfg, nullptr);
}

int detector_subgraph_size(DetectorMode mode) {
    return mode == DetectorMode::Naive ? 5 : 9;
}

namespace {

/// Fewest-edges distance from every node to `target` along forward edges.
std::map<std::string, int> distance_to(const ArchGraph& g, const std::string& target) {
    std::map<std::string, int> dist;
    std::queue<std::string> q;
    dist[target] = 0;
    q.push(target);
    while (!q.empty()) {
        std::string id = q.front();
        q.pop();
        for (const auto& e : g.edges) {
            if (e.dst == id && !dist.count(e.src)) {
                dist[e.src] = dist[id] + 1;
                q.push(e.src);
            }
        }
    }
    return dist;
}

std::string fresh_id(const ArchGraph& g, const std::string& want) {
    if (!g.has_node(want)) return want;
    for (int i = 2;; ++i) {
        std::string candidate = want + "_" + std::to_string(i);
        if (!g.has_node(candidate)) return candidate;
    }
}

}  // namespace

ArchGraph inject_mab(const ArchGraph& graph, const DetectorConfig& cfg) {
    if (cfg.alpha < 1) throw Error("detector alpha must be a positive integer");

    auto dist = distance_to(graph, graph.output_id);
    std::string site;
    int best = std::numeric_limits<int>::max();
    for (const auto& [id, n] : graph.nodes) {
        if (n.op != Op::AdaptiveAvgPool) continue;
        auto it = dist.find(id);
        if (it != dist.end() && it->second < best) {
            best = it->second;
            site = id;
        }
    }
    if (site.empty())
        throw Error("no adaptive-avg-pool injection site in graph '" + graph.name + "'");

    ArchGraph g = graph;
    const Attrs& site_attrs = g.node(site).attrs;

    auto add_node = [&](const std::string& want, Op op, Attrs attrs) {
        std::string id = fresh_id(g, want);
        g.nodes[id] = Node{id, op, attrs};
        return id;
    };
    auto link = [&](const std::string& src, const std::string& dst, int slot = 0) {
        g.edges.push_back({src, dst, slot});
    };

    Attrs win;
    win.kernel = cfg.window;
    win.stride = 1;
    Attrs fit;  // match the trunk pool's spatial size so the maps add up
    fit.out_h = site_attrs.out_h;
    fit.out_w = site_attrs.out_w;

    std::string map_id;
    if (cfg.mode == DetectorMode::Naive) {
        std::string e = add_node("det_exp", Op::ExpAffinePow, exp_attrs(cfg, cfg.beta));
        link(g.input_id, e);
        std::string m = add_node("det_minpool", Op::MinPool, win);
        link(e, m);
        std::string r = add_node("det_cmr", Op::ChannelMaxReduce, {});
        link(m, r);
        map_id = add_node("det_pool", Op::AdaptiveAvgPool, fit);
        link(r, map_id);
    } else {
        // one tap edge from the input; the white branch recovers +x by
        // negating beta on the negated image
        std::string tap = add_node("det_tap", Op::Negate, {});
        link(g.input_id, tap);
        std::string w = add_node("det_white", Op::ExpAffinePow, exp_attrs(cfg, -cfg.beta));
        link(tap, w);
        std::string b = add_node("det_black", Op::ExpAffinePow, exp_attrs(cfg, cfg.beta));
        link(tap, b);
        std::string wa = add_node("det_white_avg", Op::AvgPool, win);
        link(w, wa);
        std::string ba = add_node("det_black_avg", Op::AvgPool, win);
        link(b, ba);
        std::string p = add_node("det_prod", Op::Multiply, {});
        link(wa, p, 0);
        link(ba, p, 1);
        std::string r = add_node("det_cmr", Op::ChannelMaxReduce, {});
        link(p, r);
        map_id = add_node("det_pool", Op::AdaptiveMaxPool, fit);
        link(r, map_id);
    }

    std::string merge = add_node("det_add", Op::Add, {});
    for (auto& e : g.edges)
        if (e.src == site && e.dst != merge) e.src = merge;
    link(site, merge, 0);
    link(map_id, merge, 1);

    g.name = graph.name + "+" + detector_mode_tag(cfg.mode);
    g.provenance = (graph.provenance.empty() ? "" : graph.provenance + "; ") +
                   "detector injected at '" + site + "' (" + detector_mode_tag(cfg.mode) + ")";

    auto violations = validate(g);
    if (!violations.empty())
        throw ShapeError("injection into '" + graph.name + "' produced an invalid graph: " +
                         violations.front().message);
    return g;
}

}  // namespace mab
