#pragma once

#include <cstdint>
#include <vector>

#include "odxu/dataset.hpp"

namespace odxu {

struct SplitSpec {
    std::vector<double> fractions; // must sum to 1
    std::uint64_t seed = 0;
    bool stratified = true;
};

// Deterministic partition into one index list per fraction; stratified
// splits keep per-class counts within one of proportionality (largest
// remainder). A class with fewer rows than parts fails, naming the class.
std::vector<std::vector<int>> split_indices(const std::vector<int>& labels,
                                            const LabelTable& names, const SplitSpec& spec);

std::vector<Dataset> split(const Dataset& data, const SplitSpec& spec);

// Stratified subset of the given fraction (the transfer "portion" knob).
std::vector<int> portion_indices(const std::vector<int>& labels, const LabelTable& names,
                                 double fraction, std::uint64_t seed);

} // namespace odxu
