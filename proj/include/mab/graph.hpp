#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mab/tensor.hpp"

namespace mab {

enum class Op {
    Input,
    Conv2d,
    Dense,
    Relu,
    MaxPool,
    MinPool,
    AvgPool,
    AdaptiveAvgPool,
    AdaptiveMaxPool,
    ExpAffinePow,
    ChannelMaxReduce,
    Add,
    Multiply,
    Negate,
    Flatten,
    Output,
};

const char* op_tag(Op op);
std::optional<Op> op_from_tag(const std::string& tag);

/// True for kinds that own learnable tensors (kernel/bias or weight/bias).
bool parameterized(Op op);

/// Kind-specific attributes. Only the fields relevant to a node's kind are
/// meaningful; the rest stay at their zero defaults and are not serialized.
struct Attrs {
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 0;
    int stride = 1;
    int padding = 0;
    int out_h = 0;
    int out_w = 0;
    int in_features = 0;
    int out_features = 0;
    int alpha = 0;
    double beta = 0.0;
    double delta = 0.0;

    bool operator==(const Attrs&) const = default;
};

struct Node {
    std::string id;
    Op op = Op::Input;
    Attrs attrs;

    bool operator==(const Node&) const = default;
};

struct Edge {
    std::string src;
    std::string dst;
    int slot = 0;

    bool operator==(const Edge&) const = default;
};

/// Directed acyclic computation graph with a single input and a single
/// output node. Immutable by convention once built; all analyses and the
/// evaluator treat it as a value.
struct ArchGraph {
    std::string name;
    std::string provenance;
    Shape input_shape;
    std::map<std::string, Node> nodes;
    std::vector<Edge> edges;
    std::string input_id;
    std::string output_id;

    bool has_node(const std::string& id) const { return nodes.count(id) != 0; }
    const Node& node(const std::string& id) const;

    /// Slot-ordered producer ids of `id`. Missing slots are absent.
    std::vector<std::string> inputs_of(const std::string& id) const;
    /// Ids of nodes consuming `id`, sorted.
    std::vector<std::string> consumers_of(const std::string& id) const;

    bool operator==(const ArchGraph&) const = default;
};

/// Required input-slot count for a kind.
int arity(Op op);

struct Violation {
    std::string code;     // "cycle", "shape", "arity", "connectivity", ...
    std::string node_id;  // offending node when applicable
    std::string message;
};

/// Structural checks: single input/output, acyclicity, full connectivity
/// (no dead nodes), slot arity, and shape inference. Violations are data;
/// an empty result means the graph is valid.
std::vector<Violation> validate(const ArchGraph& g);

/// Kahn topological order with a smallest-id tie break, so evaluation order
/// is a pure function of the graph. Throws ShapeError on cycles.
std::vector<std::string> topo_order(const ArchGraph& g);

/// Output shape of a single node given its input shapes.
Shape infer_node_shape(const Node& n, const std::vector<Shape>& in_shapes,
                       const Shape& graph_input_shape);

/// Shapes for every node. Throws ShapeError naming the offending node.
std::map<std::string, Shape> infer_shapes(const ArchGraph& g);

}  // namespace mab
