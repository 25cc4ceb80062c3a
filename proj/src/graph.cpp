#include "mab/graph.hpp"

#include <algorithm>
#include <queue>
#include <set>

namespace mab {

namespace {

struct TagEntry {
    Op op;
    const char* tag;
};

constexpr TagEntry kTags[] = {
    {Op::Input, "input"},
    {Op::Conv2d, "conv2d"},
    {Op::Dense, "dense"},
    {Op::Relu, "relu"},
    {Op::MaxPool, "max-pool"},
    {Op::MinPool, "min-pool"},
    {Op::AvgPool, "avg-pool"},
    {Op::AdaptiveAvgPool, "adaptive-avg-pool"},
    {Op::AdaptiveMaxPool, "adaptive-max-pool"},
    {Op::ExpAffinePow, "exp-affine-pow"},
    {Op::ChannelMaxReduce, "channel-max-reduce"},
    {Op::Add, "add"},
    {Op::Multiply, "multiply"},
    {Op::Negate, "negate"},
    {Op::Flatten, "flatten"},
    {Op::Output, "output"},
};

}  // namespace

const char* op_tag(Op op) {
    for (const auto& e : kTags)
        if (e.op == op) return e.tag;
    return "?";
}

std::optional<Op> op_from_tag(const std::string& tag) {
    for (const auto& e : kTags)
        if (tag == e.tag) return e.op;
    return std::nullopt;
}

bool parameterized(Op op) { return op == Op::Conv2d || op == Op::Dense; }

int arity(Op op) {
    switch (op) {
        case Op::Input: return 0;
        case Op::Add:
        case Op::Multiply: return 2;
        default: return 1;
    }
}

const Node& ArchGraph::node(const std::string& id) const {
    auto it = nodes.find(id);
    if (it == nodes.end()) throw Error("unknown node id '" + id + "'");
    return it->second;
}

std::vector<std::string> ArchGraph::inputs_of(const std::string& id) const {
    int max_slot = -1;
    for (const auto& e : edges)
        if (e.dst == id) max_slot = std::max(max_slot, e.slot);
    std::vector<std::string> in(static_cast<std::size_t>(max_slot + 1));
    for (const auto& e : edges)
        if (e.dst == id) in[static_cast<std::size_t>(e.slot)] = e.src;
    return in;
}

std::vector<std::string> ArchGraph::consumers_of(const std::string& id) const {
    std::set<std::string> out;
    for (const auto& e : edges)
        if (e.src == id) out.insert(e.dst);
    return {out.begin(), out.end()};
}

std::vector<std::string> topo_order(const ArchGraph& g) {
    std::map<std::string, int> indeg;
    std::map<std::string, std::set<std::string>> succ;
    for (const auto& [id, n] : g.nodes) indeg[id] = 0;
    for (const auto& e : g.edges) {
        if (succ[e.src].insert(e.dst).second) indeg[e.dst] += 1;
    }
    std::priority_queue<std::string, std::vector<std::string>, std::greater<>> ready;
    for (const auto& [id, d] : indeg)
        if (d == 0) ready.push(id);
    std::vector<std::string> order;
    while (!ready.empty()) {
        std::string id = ready.top();
        ready.pop();
        order.push_back(id);
        for (const auto& s : succ[id])
            if (--indeg[s] == 0) ready.push(s);
    }
    if (order.size() != g.nodes.size()) throw ShapeError("graph '" + g.name + "' contains a cycle");
    return order;
}

namespace {

std::size_t conv_out_extent(std::size_t in, int k, int s, int p) {
    long long num = static_cast<long long>(in) + 2LL * p - k;
    if (num < 0 || s <= 0) throw ShapeError("window does not fit");
    return static_cast<std::size_t>(num / s + 1);
}

void require_chw(const Shape& s, const std::string& id) {
    if (s.size() != 3)
        throw ShapeError("node '" + id + "' expects a CxHxW input, got " + shape_str(s));
}

}  // namespace

Shape infer_node_shape(const Node& n, const std::vector<Shape>& in, const Shape& graph_input) {
    const std::string& id = n.id;
    auto need = [&](std::size_t k) {
        if (in.size() != k)
            throw ShapeError("node '" + id + "' expects " + std::to_string(k) + " input(s), got " +
                             std::to_string(in.size()));
    };
    switch (n.op) {
        case Op::Input:
            need(0);
            return graph_input;
        case Op::Conv2d: {
            need(1);
            require_chw(in[0], id);
            if (static_cast<int>(in[0][0]) != n.attrs.in_channels)
                throw ShapeError("node '" + id + "': in_channels " +
                                 std::to_string(n.attrs.in_channels) + " but input has " +
                                 std::to_string(in[0][0]) + " channels");
            if (n.attrs.kernel <= 0 || n.attrs.out_channels <= 0)
                throw ShapeError("node '" + id + "': bad conv attrs");
            return {static_cast<std::size_t>(n.attrs.out_channels),
                    conv_out_extent(in[0][1], n.attrs.kernel, n.attrs.stride, n.attrs.padding),
                    conv_out_extent(in[0][2], n.attrs.kernel, n.attrs.stride, n.attrs.padding)};
        }
        case Op::Dense: {
            need(1);
            if (in[0].size() != 1)
                throw ShapeError("node '" + id + "': dense expects a flat vector, got " +
                                 shape_str(in[0]));
            if (static_cast<int>(in[0][0]) != n.attrs.in_features)
                throw ShapeError("node '" + id + "': in_features " +
                                 std::to_string(n.attrs.in_features) + " but input has " +
                                 std::to_string(in[0][0]));
            if (n.attrs.out_features <= 0) throw ShapeError("node '" + id + "': bad dense attrs");
            return {static_cast<std::size_t>(n.attrs.out_features)};
        }
        case Op::Relu:
        case Op::Negate:
        case Op::ExpAffinePow:
        case Op::Output:
            need(1);
            return in[0];
        case Op::MaxPool:
        case Op::AvgPool: {
            need(1);
            require_chw(in[0], id);
            int k = n.attrs.kernel, s = n.attrs.stride;
            if (k <= 0 || s <= 0) throw ShapeError("node '" + id + "': bad pool attrs");
            if (in[0][1] < static_cast<std::size_t>(k) || in[0][2] < static_cast<std::size_t>(k))
                throw ShapeError("node '" + id + "': pool window exceeds input " +
                                 shape_str(in[0]));
            return {in[0][0], conv_out_extent(in[0][1], k, s, 0), conv_out_extent(in[0][2], k, s, 0)};
        }
        case Op::MinPool: {
            need(1);
            require_chw(in[0], id);
            int k = n.attrs.kernel;
            if (k <= 0) throw ShapeError("node '" + id + "': bad min-pool attrs");
            if (in[0][1] < static_cast<std::size_t>(k) || in[0][2] < static_cast<std::size_t>(k))
                throw ShapeError("node '" + id + "': pool window exceeds input " +
                                 shape_str(in[0]));
            // stride fixed at 1, no padding
            return {in[0][0], in[0][1] - k + 1, in[0][2] - k + 1};
        }
        case Op::AdaptiveAvgPool:
        case Op::AdaptiveMaxPool: {
            need(1);
            require_chw(in[0], id);
            if (n.attrs.out_h <= 0 || n.attrs.out_w <= 0)
                throw ShapeError("node '" + id + "': bad adaptive pool attrs");
            return {in[0][0], static_cast<std::size_t>(n.attrs.out_h),
                    static_cast<std::size_t>(n.attrs.out_w)};
        }
        case Op::ChannelMaxReduce:
            need(1);
            require_chw(in[0], id);
            return {1, in[0][1], in[0][2]};
        case Op::Add:
        case Op::Multiply: {
            need(2);
            if (in[0] == in[1]) return in[0];
            // channel broadcast: a single-channel map combines with a C-channel map
            if (in[0].size() == 3 && in[1].size() == 3 && in[0][1] == in[1][1] &&
                in[0][2] == in[1][2] && (in[0][0] == 1 || in[1][0] == 1))
                return in[0][0] == 1 ? in[1] : in[0];
            throw ShapeError("node '" + id + "': shape mismatch " + shape_str(in[0]) + " vs " +
                             shape_str(in[1]));
        }
        case Op::Flatten:
            need(1);
            return {shape_numel(in[0])};
    }
    throw ShapeError("node '" + id + "': unhandled kind");
}

std::map<std::string, Shape> infer_shapes(const ArchGraph& g) {
    std::map<std::string, Shape> shapes;
    for (const auto& id : topo_order(g)) {
        const Node& n = g.node(id);
        std::vector<Shape> in;
        for (const auto& src : g.inputs_of(id)) {
            if (src.empty() || !shapes.count(src))
                throw ShapeError("node '" + id + "' has a missing input slot");
            in.push_back(shapes.at(src));
        }
        shapes[id] = infer_node_shape(n, in, g.input_shape);
    }
    return shapes;
}

std::vector<Violation> validate(const ArchGraph& g) {
    std::vector<Violation> out;
    auto add = [&](std::string code, std::string id, std::string msg) {
        out.push_back({std::move(code), std::move(id), std::move(msg)});
    };

    if (!g.has_node(g.input_id))
        add("structure", g.input_id, "input id does not name a node");
    else if (g.node(g.input_id).op != Op::Input)
        add("structure", g.input_id, "input id is not an input node");
    if (!g.has_node(g.output_id))
        add("structure", g.output_id, "output id does not name a node");
    else if (g.node(g.output_id).op != Op::Output)
        add("structure", g.output_id, "output id is not an output node");

    int n_in = 0, n_out = 0;
    for (const auto& [id, n] : g.nodes) {
        if (n.op == Op::Input) ++n_in;
        if (n.op == Op::Output) ++n_out;
        if (n.id != id) add("structure", id, "node id field disagrees with map key");
    }
    if (n_in != 1) add("structure", g.input_id, "graph must have exactly one input node");
    if (n_out != 1) add("structure", g.output_id, "graph must have exactly one output node");

    for (const auto& e : g.edges) {
        if (!g.has_node(e.src)) add("structure", e.src, "edge source does not exist");
        if (!g.has_node(e.dst)) add("structure", e.dst, "edge target does not exist");
        if (e.slot < 0) add("structure", e.dst, "negative input slot");
    }
    if (!out.empty()) return out;

    // slot arity: every slot in [0, arity) filled exactly once
    for (const auto& [id, n] : g.nodes) {
        std::map<int, int> fill;
        for (const auto& e : g.edges)
            if (e.dst == id) fill[e.slot] += 1;
        int want = arity(n.op);
        for (int s = 0; s < want; ++s) {
            if (fill[s] == 0)
                add("arity", id, "input slot " + std::to_string(s) + " is empty");
            else if (fill[s] > 1)
                add("arity", id, "input slot " + std::to_string(s) + " is filled twice");
        }
        for (const auto& [slot, cnt] : fill)
            if (slot >= want) add("arity", id, "unexpected input slot " + std::to_string(slot));
    }
    if (!out.empty()) return out;

    try {
        topo_order(g);
    } catch (const ShapeError& e) {
        add("cycle", "", e.what());
        return out;
    }

    // connectivity: every node reachable from input, output reachable from every node
    std::set<std::string> fwd;
    {
        std::vector<std::string> stack{g.input_id};
        while (!stack.empty()) {
            std::string id = stack.back();
            stack.pop_back();
            if (!fwd.insert(id).second) continue;
            for (const auto& e : g.edges)
                if (e.src == id) stack.push_back(e.dst);
        }
    }
    std::set<std::string> bwd;
    {
        std::vector<std::string> stack{g.output_id};
        while (!stack.empty()) {
            std::string id = stack.back();
            stack.pop_back();
            if (!bwd.insert(id).second) continue;
            for (const auto& e : g.edges)
                if (e.dst == id) stack.push_back(e.src);
        }
    }
    for (const auto& [id, n] : g.nodes) {
        if (!fwd.count(id)) add("connectivity", id, "node unreachable from input");
        else if (!bwd.count(id)) add("connectivity", id, "dead node: output not reachable from it");
    }
    if (!out.empty()) return out;

    try {
        infer_shapes(g);
    } catch (const ShapeError& e) {
        add("shape", "", e.what());
    }
    return out;
}

}  // namespace mab
