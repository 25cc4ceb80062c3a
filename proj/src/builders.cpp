#include "mab/builders.hpp"

namespace mab {

namespace {

/// Sequential-graph builder: appends nodes chained to the previous one.
class Chain {
  public:
    explicit Chain(ArchGraph& g) : g_(g) {}

    std::string add(const std::string& id, Op op, Attrs attrs = {}) {
        Node n{id, op, attrs};
        g_.nodes[id] = n;
        if (!prev_.empty()) g_.edges.push_back({prev_, id, 0});
        prev_ = id;
        return id;
    }

    std::string conv(const std::string& id, int in_c, int out_c, int k, int s, int p) {
        Attrs a;
        a.in_channels = in_c;
        a.out_channels = out_c;
        a.kernel = k;
        a.stride = s;
        a.padding = p;
        return add(id, Op::Conv2d, a);
    }

    std::string maxpool(const std::string& id, int k, int s) {
        Attrs a;
        a.kernel = k;
        a.stride = s;
        return add(id, Op::MaxPool, a);
    }

    std::string last() const { return prev_; }

  private:
    ArchGraph& g_;
    std::string prev_;
};

}  // namespace

ArchGraph build_alexnet_small(int num_classes, std::size_t input_hw) {
    if (num_classes < 2) throw Error("need at least 2 classes");
    if (input_hw < 16) throw Error("alexnet-small needs at least 16x16 inputs");
    ArchGraph g;
    g.name = "alexnet-small";
    g.provenance = "reference constructor";
    g.input_shape = {3, input_hw, input_hw};

    Chain c(g);
    g.input_id = c.add("input", Op::Input);
    c.conv("conv1", 3, 64, 3, 2, 1);
    c.add("relu1", Op::Relu);
    c.maxpool("pool1", 2, 2);
    c.conv("conv2", 64, 192, 3, 1, 1);
    c.add("relu2", Op::Relu);
    c.maxpool("pool2", 2, 2);
    c.conv("conv3", 192, 384, 3, 1, 1);
    c.add("relu3", Op::Relu);
    c.conv("conv4", 384, 256, 3, 1, 1);
    c.add("relu4", Op::Relu);
    c.conv("conv5", 256, 256, 3, 1, 1);
    c.add("relu5", Op::Relu);
    c.maxpool("pool3", 2, 2);
    Attrs aap;
    aap.out_h = 6;
    aap.out_w = 6;
    c.add("aap", Op::AdaptiveAvgPool, aap);
    c.add("flatten", Op::Flatten);
    Attrs fc;
    fc.in_features = 256 * 6 * 6;
    fc.out_features = num_classes;
    c.add("fc", Op::Dense, fc);
    g.output_id = c.add("output", Op::Output);
    return g;
}

ArchGraph build_vgg11(int num_classes, std::size_t input_hw) {
    if (num_classes < 2) throw Error("need at least 2 classes");
    if (input_hw < 32) throw Error("vgg11 needs at least 32x32 inputs");
    ArchGraph g;
    g.name = "vgg11";
    g.provenance = "reference constructor";
    g.input_shape = {3, input_hw, input_hw};

    Chain c(g);
    g.input_id = c.add("input", Op::Input);
    struct Layer {
        int out_c;  // 0 marks a pooling stage
    };
    const Layer plan[] = {{64}, {0}, {128}, {0}, {256}, {256}, {0},
                          {512}, {512}, {0}, {512}, {512}, {0}};
    int in_c = 3, conv_i = 0, pool_i = 0;
    for (const Layer& l : plan) {
        if (l.out_c == 0) {
            c.maxpool("pool" + std::to_string(++pool_i), 2, 2);
        } else {
            ++conv_i;
            c.conv("conv" + std::to_string(conv_i), in_c, l.out_c, 3, 1, 1);
            c.add("relu" + std::to_string(conv_i), Op::Relu);
            in_c = l.out_c;
        }
    }
    Attrs aap;
    aap.out_h = 1;
    aap.out_w = 1;
    c.add("aap", Op::AdaptiveAvgPool, aap);
    c.add("flatten", Op::Flatten);
    Attrs fc;
    fc.in_features = 512;
    fc.out_features = num_classes;
    c.add("fc", Op::Dense, fc);
    g.output_id = c.add("output", Op::Output);
    return g;
}

ArchGraph build_architecture(const std::string& name, int num_classes, std::size_t input_hw) {
    if (name == "alexnet-small") return build_alexnet_small(num_classes, input_hw);
    if (name == "vgg11") return build_vgg11(num_classes, input_hw);
    throw Error("unknown architecture '" + name + "' (expected alexnet-small or vgg11)");
}

}  // namespace mab
