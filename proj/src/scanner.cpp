#include "mab/scanner.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mab/serialize.hpp"

namespace mab {

const char* severity_tag(Severity s) {
    switch (s) {
        case Severity::Info: return "info";
        case Severity::Warn: return "warn";
        case Severity::Critical: return "critical";
    }
    return "?";
}

std::string ScanReport::verdict() const {
    for (const auto& f : findings)
        if (f.severity == Severity::Critical) return "suspicious";
    return "clean";
}

namespace {

/// Nodes reachable from the input through parameter-free nodes only,
/// with BFS parents for witness-path reconstruction.
std::map<std::string, std::string> param_free_reachable(const ArchGraph& g) {
    std::map<std::string, std::string> parent;  // node -> predecessor on a witness path
    std::vector<std::string> queue{g.input_id};
    parent[g.input_id] = "";
    std::size_t head = 0;
    while (head < queue.size()) {
        const std::string id = queue[head++];
        for (const auto& e : g.edges) {
            if (e.src != id || parent.count(e.dst)) continue;
            if (parameterized(g.node(e.dst).op)) continue;
            parent[e.dst] = id;
            queue.push_back(e.dst);
        }
    }
    return parent;
}

/// Nodes v with some input->v path carrying at least one parameterized node.
std::set<std::string> param_touched(const ArchGraph& g) {
    std::set<std::string> touched;
    for (const auto& id : topo_order(g)) {
        const Node& n = g.node(id);
        bool t = parameterized(n.op);
        for (const auto& src : g.inputs_of(id))
            if (!src.empty() && touched.count(src)) t = true;
        if (t) touched.insert(id);
    }
    return touched;
}

std::vector<std::string> witness_path(const std::map<std::string, std::string>& parent,
                                      const std::string& from) {
    std::vector<std::string> path;
    for (std::string id = from; !id.empty(); id = parent.at(id)) path.push_back(id);
    std::reverse(path.begin(), path.end());
    return path;
}

}  // namespace

std::vector<IoPath> find_param_free_io_paths(const ArchGraph& g) {
    auto pfr = param_free_reachable(g);
    auto touched = param_touched(g);
    std::vector<IoPath> out;
    for (const auto& [id, n] : g.nodes) {
        if (n.op != Op::Add && n.op != Op::Multiply) continue;
        const auto operands = g.inputs_of(id);
        for (std::size_t i = 0; i < operands.size(); ++i) {
            if (!pfr.count(operands[i])) continue;
            bool partner_touched = false;
            for (std::size_t j = 0; j < operands.size(); ++j)
                if (j != i && touched.count(operands[j])) partner_touched = true;
            if (!partner_touched) continue;
            IoPath p;
            p.nodes = witness_path(pfr, operands[i]);
            p.nodes.push_back(id);
            p.merge_id = id;
            out.push_back(std::move(p));
            break;  // one witness per merge node
        }
    }
    return out;
}

namespace {

double powi(double x, int n) {
    double r = 1.0;
    for (int i = 0; i < n; ++i) r *= x;
    return r;
}

Interval pow_interval(Interval t, int alpha) {
    if (!t.bounded) return Interval::unbounded();
    if (alpha % 2 == 1) return {powi(t.lo, alpha), powi(t.hi, alpha), true};
    const double m = std::max(std::abs(t.lo), std::abs(t.hi));
    if (t.lo <= 0.0 && t.hi >= 0.0) return {0.0, powi(m, alpha), true};
    const double mn = std::min(std::abs(t.lo), std::abs(t.hi));
    return {powi(mn, alpha), powi(m, alpha), true};
}

Interval affine_bound(const Tensor& weight, const Tensor& bias, Interval x, std::size_t fan_in,
                      bool include_zero) {
    // hull over output units of sum_i [min(w*lo, w*hi), max(w*lo, w*hi)] + b
    double xl = x.lo, xh = x.hi;
    if (include_zero) {
        xl = std::min(xl, 0.0);
        xh = std::max(xh, 0.0);
    }
    const std::size_t units = weight.data.size() / fan_in;
    Interval out{0.0, 0.0, true};
    for (std::size_t u = 0; u < units; ++u) {
        double lo = bias.data[u % bias.data.size()], hi = lo;
        const double* w = &weight.data[u * fan_in];
        for (std::size_t i = 0; i < fan_in; ++i) {
            const double a = w[i] * xl, b = w[i] * xh;
            lo += std::min(a, b);
            hi += std::max(a, b);
        }
        if (u == 0) {
            out.lo = lo;
            out.hi = hi;
        } else {
            out.lo = std::min(out.lo, lo);
            out.hi = std::max(out.hi, hi);
        }
    }
    return out;
}

}  // namespace

std::map<std::string, Interval> propagate_bounds(const ArchGraph& g, Interval input_domain,
                                                 const ParamStore* params) {
    std::map<std::string, Interval> bounds;
    for (const auto& id : topo_order(g)) {
        const Node& n = g.node(id);
        std::vector<Interval> in;
        for (const auto& src : g.inputs_of(id)) in.push_back(bounds.at(src));
        Interval b;
        switch (n.op) {
            case Op::Input:
                b = input_domain;
                break;
            case Op::Conv2d: {
                if (!params || !params->has(id) || !in[0].bounded) {
                    b = Interval::unbounded();
                    break;
                }
                const auto& ts = params->params.at(id);
                const std::size_t fan_in = static_cast<std::size_t>(n.attrs.in_channels) *
                                           n.attrs.kernel * n.attrs.kernel;
                // padded taps contribute exact zeros, widen the tap domain
                b = affine_bound(ts[0], ts[1], in[0], fan_in, n.attrs.padding > 0);
                break;
            }
            case Op::Dense: {
                if (!params || !params->has(id) || !in[0].bounded) {
                    b = Interval::unbounded();
                    break;
                }
                const auto& ts = params->params.at(id);
                b = affine_bound(ts[0], ts[1], in[0],
                                 static_cast<std::size_t>(n.attrs.in_features), false);
                break;
            }
            case Op::Relu:
                b = in[0].bounded ? Interval{std::max(0.0, in[0].lo), std::max(0.0, in[0].hi), true}
                                  : Interval::unbounded();
                break;
            case Op::Negate:
                b = in[0].bounded ? Interval{-in[0].hi, -in[0].lo, true} : Interval::unbounded();
                break;
            case Op::ExpAffinePow: {
                if (!in[0].bounded) {
                    b = Interval::unbounded();
                    break;
                }
                const double a = std::exp(n.attrs.beta * in[0].lo) - n.attrs.delta;
                const double c = std::exp(n.attrs.beta * in[0].hi) - n.attrs.delta;
                b = pow_interval({std::min(a, c), std::max(a, c), true}, n.attrs.alpha);
                break;
            }
            case Op::MaxPool:
            case Op::MinPool:
            case Op::AvgPool:
            case Op::AdaptiveAvgPool:
            case Op::AdaptiveMaxPool:
            case Op::ChannelMaxReduce:
            case Op::Flatten:
            case Op::Output:
                b = in[0];  // selections and averages stay inside the input hull
                break;
            case Op::Add: {
                if (!in[0].bounded || !in[1].bounded) {
                    b = Interval::unbounded();
                    break;
                }
                b = {in[0].lo + in[1].lo, in[0].hi + in[1].hi, true};
                break;
            }
            case Op::Multiply: {
                if (!in[0].bounded || !in[1].bounded) {
                    b = Interval::unbounded();
                    break;
                }
                const double p1 = in[0].lo * in[1].lo, p2 = in[0].lo * in[1].hi;
                const double p3 = in[0].hi * in[1].lo, p4 = in[0].hi * in[1].hi;
                b = {std::min(std::min(p1, p2), std::min(p3, p4)),
                     std::max(std::max(p1, p2), std::max(p3, p4)), true};
                break;
            }
        }
        bounds[id] = b;
    }
    return bounds;
}

std::vector<Finding> flag_bounded_branches(const ArchGraph& g,
                                           const std::map<std::string, Interval>& bounds,
                                           const std::vector<IoPath>& io_paths,
                                           const ScanConfig& cfg) {
    auto pfr = param_free_reachable(g);

    // candidate nodes: parameter-free-reachable with a bound that no
    // ParamStore can move (the input node itself is excluded)
    std::set<std::string> candidates;
    for (const auto& [id, parent] : pfr) {
        if (id == g.input_id) continue;
        auto it = bounds.find(id);
        if (it != bounds.end() && it->second.bounded) candidates.insert(id);
    }

    // connected components over graph edges restricted to candidates
    std::vector<Finding> out;
    std::set<std::string> seen;
    std::set<std::string> io_nodes;
    for (const auto& p : io_paths) io_nodes.insert(p.nodes.begin(), p.nodes.end());

    for (const auto& start : candidates) {
        if (seen.count(start)) continue;
        std::set<std::string> comp;
        std::vector<std::string> stack{start};
        while (!stack.empty()) {
            std::string id = stack.back();
            stack.pop_back();
            if (!comp.insert(id).second) continue;
            seen.insert(id);
            for (const auto& e : g.edges) {
                if (e.src == id && candidates.count(e.dst) && !comp.count(e.dst))
                    stack.push_back(e.dst);
                if (e.dst == id && candidates.count(e.src) && !comp.count(e.src))
                    stack.push_back(e.src);
            }
        }

        double peak = 0.0;
        for (const auto& id : comp) peak = std::max(peak, bounds.at(id).magnitude());

        // threshold: relative to the merge partner's bound when one exists
        double threshold = cfg.absolute_threshold;
        bool have_partner = false;
        double partner_mag = 0.0;
        for (const auto& e : g.edges) {
            if (!comp.count(e.src)) continue;
            const Node& dst = g.node(e.dst);
            if (dst.op != Op::Add && dst.op != Op::Multiply) continue;
            for (const auto& other : g.inputs_of(e.dst)) {
                if (other == e.src || comp.count(other)) continue;
                auto it = bounds.find(other);
                if (it != bounds.end() && it->second.bounded) {
                    have_partner = true;
                    partner_mag = std::max(partner_mag, it->second.magnitude());
                }
            }
        }
        if (have_partner) threshold = cfg.trunk_factor * partner_mag;
        if (peak <= threshold) continue;

        Finding f;
        f.kind = "bounded-constant-branch";
        f.nodes.assign(comp.begin(), comp.end());
        bool on_io_path = false;
        for (const auto& id : comp)
            if (io_nodes.count(id)) on_io_path = true;
        f.severity = on_io_path ? Severity::Critical : Severity::Warn;
        std::ostringstream os;
        os << "parameter-free branch from the input reaches magnitude " << peak
           << " for every weight setting (threshold " << threshold << ")";
        f.explanation = os.str();
        out.push_back(std::move(f));
    }
    return out;
}

namespace {

using Bitmap = std::vector<char>;

struct ConeEntry {
    int depth;
    std::string node_id;
    std::string op;
    std::string attrs;
    std::size_t count;

    auto operator<=>(const ConeEntry&) const = default;
};

std::string attrs_key(const Node& n) {
    std::ostringstream os;
    const Attrs& a = n.attrs;
    os << a.in_channels << ',' << a.out_channels << ',' << a.kernel << ',' << a.stride << ','
       << a.padding << ',' << a.out_h << ',' << a.out_w << ',' << a.in_features << ','
       << a.out_features << ',' << a.alpha << ',' << a.beta << ',' << a.delta;
    return os.str();
}

struct AdaptiveWindow {
    std::size_t lo, hi;
};

AdaptiveWindow awin(std::size_t i, std::size_t in, std::size_t out) {
    return {(i * in) / out, ((i + 1) * in + out - 1) / out};
}

std::size_t popcount(const Bitmap& b) {
    std::size_t n = 0;
    for (char c : b) n += static_cast<std::size_t>(c);
    return n;
}

}  // namespace

std::optional<Finding> output_symmetry(const ArchGraph& g) {
    const auto shapes = infer_shapes(g);
    const auto order = topo_order(g);

    // structural depth: longest edge distance to the output
    std::map<std::string, int> depth;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        int d = *it == g.output_id ? 0 : -1;
        for (const auto& e : g.edges)
            if (e.src == *it && depth.count(e.dst)) d = std::max(d, depth.at(e.dst) + 1);
        if (d >= 0) depth[*it] = d;
    }

    const std::size_t units = shape_numel(shapes.at(g.output_id));
    std::vector<std::vector<ConeEntry>> signatures;

    for (std::size_t unit = 0; unit < units; ++unit) {
        std::map<std::string, Bitmap> sets;
        auto& out_set = sets[g.output_id];
        out_set.assign(units, 0);
        out_set[unit] = 1;

        std::vector<ConeEntry> sig;
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            const std::string& id = *it;
            auto sit = sets.find(id);
            if (sit == sets.end() || popcount(sit->second) == 0) continue;
            const Node& n = g.node(id);
            const Bitmap& S = sit->second;
            sig.push_back({depth.at(id), id, op_tag(n.op), attrs_key(n), popcount(S)});

            const auto srcs = g.inputs_of(id);
            if (srcs.empty()) continue;
            // dense and conv act uniformly across units: the cone below is
            // the full tensor for every unit, so it cannot distinguish them
            if (parameterized(n.op)) continue;

            auto ensure = [&](const std::string& src) -> Bitmap& {
                auto& m = sets[src];
                if (m.empty()) m.assign(shape_numel(shapes.at(src)), 0);
                return m;
            };

            switch (n.op) {
                case Op::Relu:
                case Op::Negate:
                case Op::ExpAffinePow:
                case Op::Flatten:
                case Op::Output: {
                    Bitmap& p = ensure(srcs[0]);
                    for (std::size_t i = 0; i < S.size(); ++i)
                        if (S[i]) p[i] = 1;
                    break;
                }
                case Op::MaxPool:
                case Op::MinPool:
                case Op::AvgPool: {
                    const Shape& in_s = shapes.at(srcs[0]);
                    const Shape& out_s = shapes.at(id);
                    const int k = n.attrs.kernel;
                    const int s = n.op == Op::MinPool ? 1 : n.attrs.stride;
                    Bitmap& p = ensure(srcs[0]);
                    for (std::size_t c = 0; c < out_s[0]; ++c)
                        for (std::size_t oh = 0; oh < out_s[1]; ++oh)
                            for (std::size_t ow = 0; ow < out_s[2]; ++ow) {
                                if (!S[(c * out_s[1] + oh) * out_s[2] + ow]) continue;
                                for (int i = 0; i < k; ++i)
                                    for (int j = 0; j < k; ++j)
                                        p[(c * in_s[1] + oh * s + i) * in_s[2] + ow * s + j] = 1;
                            }
                    break;
                }
                case Op::AdaptiveAvgPool:
                case Op::AdaptiveMaxPool: {
                    const Shape& in_s = shapes.at(srcs[0]);
                    const Shape& out_s = shapes.at(id);
                    Bitmap& p = ensure(srcs[0]);
                    for (std::size_t c = 0; c < out_s[0]; ++c)
                        for (std::size_t oh = 0; oh < out_s[1]; ++oh) {
                            auto [h0, h1] = awin(oh, in_s[1], out_s[1]);
                            for (std::size_t ow = 0; ow < out_s[2]; ++ow) {
                                if (!S[(c * out_s[1] + oh) * out_s[2] + ow]) continue;
                                auto [w0, w1] = awin(ow, in_s[2], out_s[2]);
                                for (std::size_t i = h0; i < h1; ++i)
                                    for (std::size_t j = w0; j < w1; ++j)
                                        p[(c * in_s[1] + i) * in_s[2] + j] = 1;
                            }
                        }
                    break;
                }
                case Op::ChannelMaxReduce: {
                    const Shape& in_s = shapes.at(srcs[0]);
                    Bitmap& p = ensure(srcs[0]);
                    const std::size_t plane = in_s[1] * in_s[2];
                    for (std::size_t i = 0; i < S.size(); ++i)
                        if (S[i])
                            for (std::size_t c = 0; c < in_s[0]; ++c) p[c * plane + i] = 1;
                    break;
                }
                case Op::Add:
                case Op::Multiply: {
                    const Shape& out_s = shapes.at(id);
                    const std::size_t plane =
                        out_s.size() == 3 ? out_s[1] * out_s[2] : shape_numel(out_s);
                    for (const auto& src : srcs) {
                        Bitmap& p = ensure(src);
                        const bool narrow = shapes.at(src) != out_s;
                        for (std::size_t i = 0; i < S.size(); ++i)
                            if (S[i]) p[narrow ? i % plane : i] = 1;
                    }
                    break;
                }
                default:
                    break;
            }
        }
        std::sort(sig.begin(), sig.end());
        signatures.push_back(std::move(sig));
    }

    // modal signature; units deviating from it are the asymmetric ones
    std::map<std::vector<ConeEntry>, std::size_t> freq;
    for (const auto& s : signatures) freq[s] += 1;
    const auto modal = std::max_element(freq.begin(), freq.end(),
                                        [](const auto& a, const auto& b) {
                                            return a.second < b.second;
                                        })
                           ->first;
    std::vector<std::size_t> deviants;
    for (std::size_t u = 0; u < signatures.size(); ++u)
        if (signatures[u] != modal) deviants.push_back(u);
    if (deviants.empty()) return std::nullopt;

    Finding f;
    f.kind = "asymmetry";
    f.severity = Severity::Warn;
    std::set<std::string> nodes;
    for (std::size_t u : deviants) {
        // entries present in one signature but not the other
        std::vector<ConeEntry> diff;
        std::set_symmetric_difference(signatures[u].begin(), signatures[u].end(), modal.begin(),
                                      modal.end(), std::back_inserter(diff));
        for (const auto& e : diff) nodes.insert(e.node_id);
    }
    f.nodes.assign(nodes.begin(), nodes.end());
    std::ostringstream os;
    os << "output unit" << (deviants.size() > 1 ? "s" : "") << " ";
    for (std::size_t i = 0; i < deviants.size(); ++i) os << (i ? "," : "") << deviants[i];
    os << " see a structurally different ancestor cone; targeted behavior is expressible";
    f.explanation = os.str();
    return f;
}

ScanReport scan_graph(const ArchGraph& g, const ScanConfig& cfg) {
    ScanReport r;
    r.graph_name = g.name;

    auto paths = find_param_free_io_paths(g);
    for (const auto& p : paths) {
        Finding f;
        f.kind = "io-path";
        f.severity = Severity::Critical;
        f.nodes = p.nodes;
        f.explanation = "parameter-free path from the input merges into '" + p.merge_id +
                        "' against a learned signal; a weight-agnostic trigger channel";
        r.findings.push_back(std::move(f));
    }

    auto bounds = propagate_bounds(g, {-1.0, 1.0, true}, nullptr);
    for (auto& f : flag_bounded_branches(g, bounds, paths, cfg)) r.findings.push_back(std::move(f));

    if (auto f = output_symmetry(g)) r.findings.push_back(std::move(*f));

    std::sort(r.findings.begin(), r.findings.end(), [](const Finding& a, const Finding& b) {
        const std::string an = a.nodes.empty() ? "" : a.nodes.front();
        const std::string bn = b.nodes.empty() ? "" : b.nodes.front();
        return std::tie(an, a.kind) < std::tie(bn, b.kind);
    });
    return r;
}

ScanReport scan(const std::string& graph_file, const ScanConfig& cfg) {
    return scan_graph(load_graph_file(graph_file), cfg);
}

std::string report_json(const ScanReport& r) {
    nlohmann::json j;
    j["graph"] = r.graph_name;
    j["verdict"] = r.verdict();
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& f : r.findings) {
        nlohmann::json jf;
        jf["kind"] = f.kind;
        jf["severity"] = severity_tag(f.severity);
        jf["nodes"] = f.nodes;
        jf["explanation"] = f.explanation;
        arr.push_back(jf);
    }
    j["findings"] = arr;
    return j.dump(2) + "\n";
}

std::string report_text(const ScanReport& r) {
    std::ostringstream os;
    os << "graph: " << r.graph_name << "\nverdict: " << r.verdict() << "\n";
    if (r.findings.empty()) os << "no findings\n";
    for (const auto& f : r.findings) {
        os << "  [" << severity_tag(f.severity) << "] " << f.kind << ": " << f.explanation
           << "\n    nodes:";
        for (const auto& n : f.nodes) os << ' ' << n;
        os << '\n';
    }
    return os.str();
}

}  // namespace mab
