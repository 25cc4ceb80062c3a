#include "mab/serialize.hpp"

#include <json.hpp>

#include "mab/io.hpp"

namespace mab {

using nlohmann::json;

namespace {

json attrs_to_json(const Node& n) {
    const Attrs& a = n.attrs;
    json j = json::object();
    switch (n.op) {
        case Op::Conv2d:
            j["in_channels"] = a.in_channels;
            j["out_channels"] = a.out_channels;
            j["kernel"] = a.kernel;
            j["stride"] = a.stride;
            j["padding"] = a.padding;
            break;
        case Op::Dense:
            j["in_features"] = a.in_features;
            j["out_features"] = a.out_features;
            break;
        case Op::MaxPool:
        case Op::AvgPool:
            j["kernel"] = a.kernel;
            j["stride"] = a.stride;
            break;
        case Op::MinPool:
            j["kernel"] = a.kernel;
            break;
        case Op::AdaptiveAvgPool:
        case Op::AdaptiveMaxPool:
            j["out_h"] = a.out_h;
            j["out_w"] = a.out_w;
            break;
        case Op::ExpAffinePow:
            j["alpha"] = a.alpha;
            j["beta"] = a.beta;
            j["delta"] = a.delta;
            break;
        default:
            break;
    }
    return j;
}

Attrs attrs_from_json(Op op, const json& j, const std::string& id) {
    Attrs a;
    auto geti = [&](const char* key) {
        if (!j.contains(key) || !j.at(key).is_number_integer())
            throw ParseError("node '" + id + "': missing integer attr '" + key + "'");
        return j.at(key).get<int>();
    };
    auto getd = [&](const char* key) {
        if (!j.contains(key) || !j.at(key).is_number())
            throw ParseError("node '" + id + "': missing numeric attr '" + key + "'");
        return j.at(key).get<double>();
    };
    switch (op) {
        case Op::Conv2d:
            a.in_channels = geti("in_channels");
            a.out_channels = geti("out_channels");
            a.kernel = geti("kernel");
            a.stride = geti("stride");
            a.padding = geti("padding");
            break;
        case Op::Dense:
            a.in_features = geti("in_features");
            a.out_features = geti("out_features");
            break;
        case Op::MaxPool:
        case Op::AvgPool:
            a.kernel = geti("kernel");
            a.stride = geti("stride");
            break;
        case Op::MinPool:
            a.kernel = geti("kernel");
            break;
        case Op::AdaptiveAvgPool:
        case Op::AdaptiveMaxPool:
            a.out_h = geti("out_h");
            a.out_w = geti("out_w");
            break;
        case Op::ExpAffinePow:
            a.alpha = geti("alpha");
            a.beta = getd("beta");
            a.delta = getd("delta");
            if (a.alpha < 1) throw ParseError("node '" + id + "': alpha must be >= 1");
            break;
        default:
            break;
    }
    return a;
}

}  // namespace

std::string serialize(const ArchGraph& g) {
    json j;
    j["version"] = "1";
    j["name"] = g.name;
    if (!g.provenance.empty()) j["provenance"] = g.provenance;
    j["input_shape"] = g.input_shape;
    json nodes = json::array();
    for (const auto& [id, n] : g.nodes) {
        json jn;
        jn["id"] = id;
        jn["tag"] = op_tag(n.op);
        jn["attrs"] = attrs_to_json(n);
        nodes.push_back(jn);
    }
    j["nodes"] = nodes;
    json edges = json::array();
    for (const auto& e : g.edges) edges.push_back(json::array({e.src, e.dst, e.slot}));
    j["edges"] = edges;
    j["input"] = g.input_id;
    j["output"] = g.output_id;
    return j.dump(2) + "\n";
}

ArchGraph deserialize(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("malformed graph document: ") + e.what());
    }
    if (!j.contains("version") || !j.at("version").is_string())
        throw ParseError("graph document missing version");
    if (j.at("version").get<std::string>() != "1")
        throw ParseError("unknown graph schema version '" + j.at("version").get<std::string>() +
                         "'");
    for (const char* key : {"name", "input_shape", "nodes", "edges", "input", "output"})
        if (!j.contains(key)) throw ParseError(std::string("graph document missing '") + key + "'");

    ArchGraph g;
    g.name = j.at("name").get<std::string>();
    g.provenance = j.value("provenance", "");
    for (const auto& d : j.at("input_shape")) {
        if (!d.is_number_integer() || d.get<long long>() <= 0)
            throw ParseError("input_shape extents must be positive integers");
        g.input_shape.push_back(d.get<std::size_t>());
    }
    for (const auto& jn : j.at("nodes")) {
        if (!jn.contains("id") || !jn.contains("tag"))
            throw ParseError("node entry missing id or tag");
        const std::string id = jn.at("id").get<std::string>();
        const std::string tag = jn.at("tag").get<std::string>();
        auto op = op_from_tag(tag);
        if (!op) throw ParseError("node '" + id + "': unknown tag '" + tag + "'");
        if (g.nodes.count(id)) throw ParseError("duplicate node id '" + id + "'");
        Node n;
        n.id = id;
        n.op = *op;
        n.attrs = attrs_from_json(*op, jn.contains("attrs") ? jn.at("attrs") : json::object(), id);
        g.nodes[id] = n;
    }
    for (const auto& je : j.at("edges")) {
        if (!je.is_array() || je.size() != 3)
            throw ParseError("edge entries must be [src, dst, slot] triples");
        g.edges.push_back({je.at(0).get<std::string>(), je.at(1).get<std::string>(),
                           je.at(2).get<int>()});
    }
    g.input_id = j.at("input").get<std::string>();
    g.output_id = j.at("output").get<std::string>();

    auto violations = validate(g);
    if (!violations.empty()) {
        std::string msg = "graph fails validation:";
        for (const auto& v : violations)
            msg += "\n  [" + v.code + "] " + (v.node_id.empty() ? "" : v.node_id + ": ") + v.message;
        throw Error(msg);
    }
    return g;
}

ArchGraph load_graph_file(const std::string& path) {
    return deserialize(read_file(path));
}

void save_graph_file(const ArchGraph& g, const std::string& path) {
    write_file_atomic(path, serialize(g));
}

}  // namespace mab
