#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mab/autodiff.hpp"
#include "mab/graph.hpp"

namespace mab {

/// Closed interval bound on a node's activations. `bounded` is false for
/// nodes whose range depends on unknown parameters.
struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool bounded = true;

    static Interval unbounded() { return {0.0, 0.0, false}; }
    double magnitude() const { return std::max(std::abs(lo), std::abs(hi)); }
};

enum class Severity { Info, Warn, Critical };

struct Finding {
    std::string kind;  // "io-path", "bounded-constant-branch", "asymmetry"
    Severity severity = Severity::Info;
    std::vector<std::string> nodes;
    std::string explanation;
};

struct ScanReport {
    std::string graph_name;
    std::vector<Finding> findings;
    std::string verdict() const;  // "suspicious" iff any finding is critical
};

const char* severity_tag(Severity s);

struct IoPath {
    std::vector<std::string> nodes;  // witness path, input first
    std::string merge_id;            // add/multiply node it feeds
};

/// Parameter-free input-to-merge paths: simple paths starting at the input
/// whose nodes are all parameter-free, ending at an add/multiply whose other
/// operand has at least one parameterized node between it and the input.
/// One witness path is reported per merge node. This is the structural
/// signature of a weight-agnostic trigger branch.
std::vector<IoPath> find_param_free_io_paths(const ArchGraph& g);

/// Sound interval propagation from a per-pixel input domain. Without a
/// ParamStore, conv/dense outputs are marked unbounded and propagation
/// continues; with one, affine layers get absolute-sum bounds.
std::map<std::string, Interval> propagate_bounds(const ArchGraph& g, Interval input_domain,
                                                 const ParamStore* params = nullptr);

struct ScanConfig {
    double absolute_threshold = 100.0;  // flag parameter-independent bounds above this
    double trunk_factor = 10.0;         // or above factor x the merge partner's bound
};

/// Parameter-free input-reachable branches whose parameter-independent
/// output bound dwarfs anything the trunk can produce. Warn by default;
/// critical when the branch also carries an io-path finding.
std::vector<Finding> flag_bounded_branches(const ArchGraph& g,
                                           const std::map<std::string, Interval>& bounds,
                                           const std::vector<IoPath>& io_paths,
                                           const ScanConfig& cfg = {});

/// Structural per-output-unit signature check. Dense/conv layers act
/// uniformly across their units; anything that gives some output unit a
/// structurally different ancestor cone (for instance unequal adaptive-pool
/// windows feeding the class axis) is reported as an asymmetry, since only
/// asymmetric heads can realize targeted behavior.
std::optional<Finding> output_symmetry(const ArchGraph& g);

/// Runs all analyses with default configuration; findings are ordered by
/// (first node id, kind).
ScanReport scan_graph(const ArchGraph& g, const ScanConfig& cfg = {});

/// Loads a .archjson file and scans it. Parse and validation errors throw.
ScanReport scan(const std::string& graph_file, const ScanConfig& cfg = {});

std::string report_json(const ScanReport& r);
std::string report_text(const ScanReport& r);

}  // namespace mab
