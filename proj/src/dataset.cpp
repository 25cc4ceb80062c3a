#include "mab/dataset.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "mab/rng.hpp"

namespace mab {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

struct ByteReader {
    std::vector<unsigned char> bytes;
    std::size_t pos = 0;
    std::string path;

    explicit ByteReader(const std::string& p) : path(p) {
        std::ifstream in(p, std::ios::binary);
        if (!in) throw IoError("cannot open '" + p + "'");
        bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }

    std::uint32_t read_u32_be() {
        if (pos + 4 > bytes.size()) throw ParseError("truncated file '" + path + "'");
        std::uint32_t v = (std::uint32_t(bytes[pos]) << 24) | (std::uint32_t(bytes[pos + 1]) << 16) |
                          (std::uint32_t(bytes[pos + 2]) << 8) | std::uint32_t(bytes[pos + 3]);
        pos += 4;
        return v;
    }

    const unsigned char* take(std::size_t n) {
        if (pos + n > bytes.size()) throw ParseError("truncated file '" + path + "'");
        const unsigned char* p = bytes.data() + pos;
        pos += n;
        return p;
    }
};

double byte_to_unit(unsigned char b) { return static_cast<double>(b) / 127.5 - 1.0; }

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    ByteReader img(images_path);
    if (img.read_u32_be() != kIdxImagesMagic)
        throw ParseError("bad magic in '" + images_path + "' (expected IDX image file)");
    const std::size_t n = img.read_u32_be();
    const std::size_t rows = img.read_u32_be();
    const std::size_t cols = img.read_u32_be();

    ByteReader lab(labels_path);
    if (lab.read_u32_be() != kIdxLabelsMagic)
        throw ParseError("bad magic in '" + labels_path + "' (expected IDX label file)");
    const std::size_t nl = lab.read_u32_be();
    if (nl != n)
        throw ParseError("image/label count mismatch: " + std::to_string(n) + " vs " +
                         std::to_string(nl));

    Dataset ds;
    ds.images.reserve(n);
    ds.labels.reserve(n);
    int max_label = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned char* px = img.take(rows * cols);
        Tensor t = Tensor::zeros({3, rows, cols});
        for (std::size_t j = 0; j < rows * cols; ++j) {
            const double v = byte_to_unit(px[j]);
            t.data[j] = v;
            t.data[rows * cols + j] = v;
            t.data[2 * rows * cols + j] = v;
        }
        ds.images.push_back(std::move(t));
        const int label = *lab.take(1);
        max_label = std::max(max_label, label);
        ds.labels.push_back(label);
    }
    ds.num_classes = max_label + 1;
    return ds;
}

Dataset load_cifar_binary(const std::vector<std::string>& paths) {
    constexpr std::size_t kRecord = 1 + 3 * 32 * 32;
    Dataset ds;
    ds.num_classes = 10;
    for (const auto& path : paths) {
        ByteReader in(path);
        if (in.bytes.empty() || in.bytes.size() % kRecord != 0)
            throw ParseError("'" + path + "' length " + std::to_string(in.bytes.size()) +
                             " is not a multiple of the " + std::to_string(kRecord) +
                             "-byte record");
        const std::size_t n = in.bytes.size() / kRecord;
        for (std::size_t i = 0; i < n; ++i) {
            const int label = *in.take(1);
            if (label > 9) throw ParseError("'" + path + "': label byte " + std::to_string(label) +
                                            " out of range");
            const unsigned char* px = in.take(3 * 32 * 32);
            Tensor t = Tensor::zeros({3, 32, 32});
            for (std::size_t j = 0; j < t.data.size(); ++j) t.data[j] = byte_to_unit(px[j]);
            ds.labels.push_back(label);
            ds.images.push_back(std::move(t));
        }
    }
    return ds;
}

namespace {

enum class ShapeKind { Disc, Box, Cross, Ring, Stripes, Diamond };

/// Distinct (shape, foreground, background) combination per class. Channel
/// values are later clamped to [-0.6, 0.6].
struct ClassStyle {
    ShapeKind kind;
    double fg[3];
    double bg[3];
};

ClassStyle class_style(int cls, Rng& palette_rng) {
    static const ShapeKind kinds[] = {ShapeKind::Disc, ShapeKind::Box, ShapeKind::Cross,
                                      ShapeKind::Ring, ShapeKind::Stripes, ShapeKind::Diamond};
    ClassStyle s;
    s.kind = kinds[cls % 6];
    // well separated hues around the color wheel, fixed per class
    const double hue = 2.0 * 3.14159265358979323846 * cls / 12.0 + palette_rng.uniform(0.0, 0.2);
    s.fg[0] = 0.45 * std::cos(hue);
    s.fg[1] = 0.45 * std::cos(hue + 2.1);
    s.fg[2] = 0.45 * std::cos(hue + 4.2);
    for (int c = 0; c < 3; ++c) s.bg[c] = -0.5 * s.fg[c];
    return s;
}

bool inside_shape(ShapeKind kind, double dy, double dx, double r) {
    switch (kind) {
        case ShapeKind::Disc: return dy * dy + dx * dx <= r * r;
        case ShapeKind::Box: return std::abs(dy) <= r && std::abs(dx) <= r;
        case ShapeKind::Cross: return std::abs(dy) <= r / 2.5 || std::abs(dx) <= r / 2.5;
        case ShapeKind::Ring: {
            const double d2 = dy * dy + dx * dx;
            return d2 <= r * r && d2 >= (r * 0.55) * (r * 0.55);
        }
        case ShapeKind::Stripes: return std::fmod(std::abs(dy + r * 4), 4.0) < 2.0 && std::abs(dx) <= r && std::abs(dy) <= r;
        case ShapeKind::Diamond: return std::abs(dy) + std::abs(dx) <= r;
    }
    return false;
}

}  // namespace

Dataset make_synthetic(int num_classes, std::size_t n, std::uint64_t seed, std::size_t image_size,
                       double noise) {
    if (num_classes < 2) throw Error("need at least 2 classes");
    if (image_size < 8) throw Error("synthetic images must be at least 8x8");

    Dataset ds;
    ds.num_classes = num_classes;
    ds.images.reserve(n);
    ds.labels.reserve(n);

    Rng palette_rng(derive_seed(seed, "palette"));
    std::vector<ClassStyle> styles;
    for (int c = 0; c < num_classes; ++c) styles.push_back(class_style(c, palette_rng));

    const double S = static_cast<double>(image_size);
    Rng rng(derive_seed(seed, "samples"));
    for (std::size_t i = 0; i < n; ++i) {
        const int cls = static_cast<int>(i % static_cast<std::size_t>(num_classes));
        const ClassStyle& st = styles[static_cast<std::size_t>(cls)];
        // jittered center and radius; shapes may reach the borders so that
        // every pixel region carries task signal
        const double cy = S / 2.0 + rng.uniform(-0.17 * S, 0.17 * S);
        const double cx = S / 2.0 + rng.uniform(-0.17 * S, 0.17 * S);
        const double r = S * rng.uniform(0.18, 0.30);

        Tensor img = Tensor::zeros({3, image_size, image_size});
        for (std::size_t y = 0; y < image_size; ++y)
            for (std::size_t x = 0; x < image_size; ++x) {
                const bool fg = inside_shape(st.kind, static_cast<double>(y) - cy,
                                             static_cast<double>(x) - cx, r);
                for (std::size_t c = 0; c < 3; ++c) {
                    double v = (fg ? st.fg[c] : st.bg[c]) + rng.uniform(-noise, noise);
                    img.at3(c, y, x) = std::clamp(v, -0.5, 0.5);
                }
            }
        ds.images.push_back(std::move(img));
        ds.labels.push_back(cls);
    }
    return ds;
}

}  // namespace mab
