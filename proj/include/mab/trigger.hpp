#pragma once

#include <optional>
#include <string>

#include "mab/tensor.hpp"

namespace mab {

enum class TriggerPattern { WhiteBox, Checkerboard };
enum class Corner { BottomLeft, BottomRight, TopLeft, TopRight };

/// A small visual patch stamped into one corner of an image. Checkerboard
/// phase is anchored at the outermost corner cell: white there by default.
struct TriggerSpec {
    TriggerPattern pattern = TriggerPattern::Checkerboard;
    int size = 3;
    Corner placement = Corner::BottomLeft;
    bool white_at_corner = true;  // checkerboard phase
    double white = 1.0;
    double black = -1.0;
};

const char* pattern_tag(TriggerPattern p);
std::optional<TriggerPattern> pattern_from_tag(const std::string& tag);
const char* corner_tag(Corner c);
std::optional<Corner> corner_from_tag(const std::string& tag);

/// Overwrites the trigger pixels across all channels; every other pixel is
/// untouched. Idempotent. Throws if the trigger does not fit the image.
Tensor apply_trigger(const Tensor& image, const TriggerSpec& spec);

}  // namespace mab
