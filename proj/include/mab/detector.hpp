#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mab/autodiff.hpp"
#include "mab/graph.hpp"
#include "mab/tensor.hpp"

namespace mab {

enum class DetectorMode { Naive, Robust };

/// Parameters of the trigger detector subgraph. All nodes it expands to are
/// parameter-free, so the detector behaves identically for every weight
/// setting of the host network.
struct DetectorConfig {
    int alpha = 10;      // positive integer exponent
    double beta = 1.0;
    double delta = 1.0;
    int window = 3;      // pooling window, matches the trigger size
    DetectorMode mode = DetectorMode::Robust;
};

const char* detector_mode_tag(DetectorMode m);
std::optional<DetectorMode> detector_mode_from_tag(const std::string& tag);

/// Saturating-pixel map: (e^(beta*x) - delta)^alpha elementwise, min-pooled
/// over window x window (stride 1), then collapsed to one channel by a
/// channel-wise max. Fires on solid bright patches; exactly 0 on a gray
/// image.
Tensor naive_detector(const Tensor& image, const DetectorConfig& cfg);

/// Checkerboard map: the white-pixel branch avgpool((e^(beta*x)-delta)^alpha)
/// multiplied elementwise with the black-pixel branch
/// avgpool((e^(-beta*x)-delta)^alpha), then the channel-wise max. Requires
/// bright and dark pixels in the same window, so a plain white patch scores
/// orders of magnitude lower than a checkerboard.
Tensor robust_detector(const Tensor& image, const DetectorConfig& cfg);

/// Named per-step activation maps of a detector run, in evaluation order.
/// Useful for visualizing how the trigger lights up stage by stage.
using DetectorTrace = std::vector<std::pair<std::string, Tensor>>;

Tensor naive_detector(const Tensor& image, const DetectorConfig& cfg, DetectorTrace* trace);
Tensor robust_detector(const Tensor& image, const DetectorConfig& cfg, DetectorTrace* trace);

/// Nodes a detector expands to inside a graph (excluding the merge add).
int detector_subgraph_size(DetectorMode mode);

/// Grafts the detector onto `graph`: a single tap edge from the input node
/// feeds the detector chain, whose map is adaptive-max-pooled to the trunk
/// adaptive-avg-pool's spatial size and channel-broadcast-added to its
/// output. All original nodes and edges are preserved; every injected node
/// is parameter-free. When several adaptive-avg-pool sites exist the one
/// nearest the output is used.
ArchGraph inject_mab(const ArchGraph& graph, const DetectorConfig& cfg);

}  // namespace mab
