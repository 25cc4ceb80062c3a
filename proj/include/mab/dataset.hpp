#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mab/tensor.hpp"

namespace mab {

/// Labeled image collection. Images are 3xHxW tensors with values in
/// [-1, 1]; labels are class indices below num_classes.
struct Dataset {
    std::vector<Tensor> images;
    std::vector<int> labels;
    int num_classes = 0;
    std::string split;  // "train" or "test"

    std::size_t size() const { return images.size(); }
};

/// Parses the IDX image/label pair (big-endian magic 0x00000803 / 0x00000801,
/// unsigned bytes). Pixels map to [-1, 1] via x / 127.5 - 1; grayscale data
/// is replicated to 3 channels.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Parses CIFAR-10 binary batches: 3073-byte records of one label byte plus
/// 3x32x32 channel-major pixels, same [-1, 1] mapping.
Dataset load_cifar_binary(const std::vector<std::string>& paths);

/// Class-conditional colored-shape images, deterministic per seed. Each
/// class renders a distinct shape/palette combination; colors stay inside
/// [-0.5, 0.5] so no natural pixel comes near the trigger extremes and the
/// saturating detector keeps a large headroom over scene content.
/// Labels are assigned round-robin, so class counts are balanced within 1.
/// `noise` is the half-width of the uniform per-pixel jitter; large values
/// make the task genuinely hard, which keeps training losses away from
/// zero.
Dataset make_synthetic(int num_classes, std::size_t n, std::uint64_t seed,
                       std::size_t image_size = 16, double noise = 0.05);

}  // namespace mab
