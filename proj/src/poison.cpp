#include "mab/poison.hpp"

#include <algorithm>
#include <cmath>

#include "mab/rng.hpp"

namespace mab {

std::vector<std::size_t> poison_indices(std::size_t dataset_size, double fraction,
                                        std::uint64_t seed) {
    const double want = fraction * static_cast<double>(dataset_size);
    if (fraction <= 0.0 || fraction > 1.0 || want < 1.0)
        throw Error("poison fraction " + std::to_string(fraction) + " selects no examples from " +
                    std::to_string(dataset_size));
    // guard against 0.1 * 100 ceiling to 11
    const auto count = static_cast<std::size_t>(std::ceil(want - 1e-9 * std::max(1.0, want)));

    std::vector<std::size_t> pool(dataset_size);
    for (std::size_t i = 0; i < dataset_size; ++i) pool[i] = i;
    Rng rng(derive_seed(seed, "poison-sample"));
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.next_below(dataset_size - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(count);
    std::sort(pool.begin(), pool.end());
    return pool;
}

Dataset poison_dataset(const Dataset& ds, const PoisonSpec& spec, std::uint64_t seed) {
    if (spec.policy == LabelPolicy::FixedTarget &&
        (spec.target_class < 0 || spec.target_class >= ds.num_classes))
        throw Error("poison target class " + std::to_string(spec.target_class) +
                    " out of range for " + std::to_string(ds.num_classes) + " classes");

    Dataset out = ds;
    Rng label_rng(derive_seed(seed, "poison-labels"));
    for (std::size_t idx : poison_indices(ds.size(), spec.fraction, seed)) {
        out.images[idx] = apply_trigger(ds.images[idx], spec.trigger);
        out.labels[idx] = spec.policy == LabelPolicy::FixedTarget
                              ? spec.target_class
                              : static_cast<int>(label_rng.next_below(
                                    static_cast<std::uint64_t>(ds.num_classes)));
    }
    return out;
}

}  // namespace mab
