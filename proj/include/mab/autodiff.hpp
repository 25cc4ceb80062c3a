#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mab/graph.hpp"
#include "mab/tensor.hpp"

namespace mab {

/// Learnable tensors per node id. Conv nodes own {kernel, bias}, dense nodes
/// {weight, bias}; parameter-free nodes have no entry.
struct ParamStore {
    std::map<std::string, std::vector<Tensor>> params;
    std::uint64_t rng_seed = 0;

    bool has(const std::string& id) const { return params.count(id) != 0; }
};

/// Gradients shaped exactly like the ParamStore they were taken against.
struct GradStore {
    std::map<std::string, std::vector<Tensor>> grads;
};

/// Parameter tensor shapes for one node (empty for parameter-free kinds).
std::vector<Shape> param_shapes(const Node& n);

/// Fresh parameters, each tensor uniform in +-sqrt(6 / fan_in), drawn from a
/// deterministic stream seeded by `seed`. Node order is the sorted id order.
ParamStore init_params(const ArchGraph& g, std::uint64_t seed);

/// Zero-filled buffer congruent with `p` (for gradients or SGD velocity).
ParamStore zeros_like(const ParamStore& p);

/// Evaluates one operator. `params` are the node's own tensors (empty span
/// for parameter-free kinds), `inputs` the slot-ordered activations.
Tensor evaluate_node(const Node& n, const std::vector<const Tensor*>& params,
                     const std::vector<const Tensor*>& inputs);

/// Activations for every node, keyed by id. The output node's entry holds
/// the logits.
std::map<std::string, Tensor> forward_pass(const ArchGraph& g, const ParamStore& ps,
                                           const Tensor& input);

double softmax_cross_entropy(const Tensor& logits, int label);
Tensor softmax_cross_entropy_grad(const Tensor& logits, int label);

/// Reverse-mode gradients of the softmax cross-entropy loss at `label`
/// w.r.t. every parameter tensor. Parameter-free nodes receive no entries
/// but still propagate gradients upstream.
GradStore backward_pass(const ArchGraph& g, const ParamStore& ps, const Tensor& input, int label);

/// Same, reusing activations from a prior forward_pass; also reports the loss.
GradStore backward_pass(const ArchGraph& g, const ParamStore& ps,
                        const std::map<std::string, Tensor>& acts, int label, double* loss_out);

/// In-place accumulation: dst += src (shape-congruent stores).
void accumulate(GradStore& dst, const GradStore& src);
void scale(GradStore& g, double factor);

/// v <- momentum * v + g;  theta <- theta - lr * v.
void sgd_step(ParamStore& params, const GradStore& grads, double lr, double momentum,
              ParamStore& velocity);

}  // namespace mab
