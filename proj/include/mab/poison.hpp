#pragma once

#include <cstdint>
#include <vector>

#include "mab/dataset.hpp"
#include "mab/trigger.hpp"

namespace mab {

enum class LabelPolicy { FixedTarget, Random };

/// Data-poisoning recipe: stamp the trigger on a seeded sample of the
/// training set and rewrite the labels.
struct PoisonSpec {
    double fraction = 0.1;  // in (0, 1]
    TriggerSpec trigger;
    LabelPolicy policy = LabelPolicy::FixedTarget;
    int target_class = 0;
};

/// Indices that a given spec/seed would poison (sorted). Sampling is
/// without replacement; ceil(fraction * N) examples are chosen.
std::vector<std::size_t> poison_indices(std::size_t dataset_size, double fraction,
                                        std::uint64_t seed);

/// Returns a copy of `ds` with the chosen examples triggered and relabeled.
/// Example order is preserved. Throws if fraction * N < 1 or the target
/// class is out of range.
Dataset poison_dataset(const Dataset& ds, const PoisonSpec& spec, std::uint64_t seed);

}  // namespace mab
