#pragma once

#include "mab/graph.hpp"

namespace mab {

/// Small-filter AlexNet for 32x32 RGB inputs. Channel plan follows the
/// widely used 32x32 adaptation (64-192-384-256-256, 3x3 filters, stride-2
/// stem); the trunk pools through adaptive-avg-pool to 6x6 before a single
/// dense head. The adaptive pool keeps the head valid for other declared
/// input sizes (>= 16).
ArchGraph build_alexnet_small(int num_classes, std::size_t input_hw = 32);

/// VGG-11 for 32x32 RGB inputs, batch-norm-free, ending in a 1x1
/// adaptive-avg-pool and a single dense head. Needs input_hw >= 32 (five
/// halvings).
ArchGraph build_vgg11(int num_classes, std::size_t input_hw = 32);

/// Builds a named reference architecture ("alexnet-small" or "vgg11").
ArchGraph build_architecture(const std::string& name, int num_classes,
                             std::size_t input_hw = 32);

}  // namespace mab
