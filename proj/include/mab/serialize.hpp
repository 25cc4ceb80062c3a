#pragma once

#include <string>

#include "mab/graph.hpp"

namespace mab {

/// Graph JSON schema, version "1":
///   {version, name, input_shape, nodes:[{id, tag, attrs}], edges:[[src,dst,slot]],
///    input, output}
/// Round-trip is the identity up to node ordering.
std::string serialize(const ArchGraph& g);

/// Parses and validates. Throws ParseError on malformed documents, unknown
/// tags (naming the offending node id) or unknown versions; throws Error if
/// the parsed graph fails validation.
ArchGraph deserialize(const std::string& text);

ArchGraph load_graph_file(const std::string& path);
void save_graph_file(const ArchGraph& g, const std::string& path);

}  // namespace mab
