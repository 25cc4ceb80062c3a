#include "mab/trigger.hpp"

namespace mab {

const char* pattern_tag(TriggerPattern p) {
    return p == TriggerPattern::WhiteBox ? "white-box" : "checkerboard";
}

std::optional<TriggerPattern> pattern_from_tag(const std::string& tag) {
    if (tag == "white-box") return TriggerPattern::WhiteBox;
    if (tag == "checkerboard") return TriggerPattern::Checkerboard;
    return std::nullopt;
}

const char* corner_tag(Corner c) {
    switch (c) {
        case Corner::BottomLeft: return "bottom-left";
        case Corner::BottomRight: return "bottom-right";
        case Corner::TopLeft: return "top-left";
        case Corner::TopRight: return "top-right";
    }
    return "?";
}

std::optional<Corner> corner_from_tag(const std::string& tag) {
    if (tag == "bottom-left") return Corner::BottomLeft;
    if (tag == "bottom-right") return Corner::BottomRight;
    if (tag == "top-left") return Corner::TopLeft;
    if (tag == "top-right") return Corner::TopRight;
    return std::nullopt;
}

Tensor apply_trigger(const Tensor& image, const TriggerSpec& spec) {
    if (image.shape.size() != 3 || image.shape[0] != 3)
        throw ShapeError("apply_trigger expects a 3xHxW image, got " + shape_str(image.shape));
    const std::size_t H = image.shape[1], W = image.shape[2];
    const std::size_t k = static_cast<std::size_t>(spec.size);
    if (spec.size < 1 || k > H || k > W)
        throw Error("trigger of size " + std::to_string(spec.size) + " does not fit a " +
                    std::to_string(H) + "x" + std::to_string(W) + " image");

    // row/col of the outermost corner cell, and the direction the patch grows
    std::size_t r0 = 0, c0 = 0;
    int dr = 1, dc = 1;
    switch (spec.placement) {
        case Corner::TopLeft: r0 = 0, c0 = 0, dr = 1, dc = 1; break;
        case Corner::TopRight: r0 = 0, c0 = W - 1, dr = 1, dc = -1; break;
        case Corner::BottomLeft: r0 = H - 1, c0 = 0, dr = -1, dc = 1; break;
        case Corner::BottomRight: r0 = H - 1, c0 = W - 1, dr = -1, dc = -1; break;
    }

    Tensor out = image;
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            // (i, j) counted from the outermost corner cell
            const bool white = spec.pattern == TriggerPattern::WhiteBox ||
                               (((i + j) % 2 == 0) == spec.white_at_corner);
            const double v = white ? spec.white : spec.black;
            const std::size_t r = static_cast<std::size_t>(static_cast<long long>(r0) + dr * static_cast<long long>(i));
            const std::size_t c = static_cast<std::size_t>(static_cast<long long>(c0) + dc * static_cast<long long>(j));
            for (std::size_t ch = 0; ch < 3; ++ch) out.at3(ch, r, c) = v;
        }
    }
    return out;
}

}  // namespace mab
