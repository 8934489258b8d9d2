#include "odxu/split.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

namespace odxu {

namespace {

// Largest-remainder allocation of n items across the fractions.
std::vector<std::size_t> allocate(std::size_t n, const std::vector<double>& fractions) {
    std::vector<std::size_t> counts(fractions.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t p = 0; p < fractions.size(); ++p) {
        const double quota = static_cast<double>(n) * fractions[p];
        counts[p] = static_cast<std::size_t>(std::floor(quota + 1e-9));
        assigned += counts[p];
        remainders.push_back({quota - std::floor(quota + 1e-9), p});
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t i = 0; assigned < n; ++i, ++assigned) counts[remainders[i % remainders.size()].second]++;
    return counts;
}

} // namespace

std::vector<std::vector<int>> split_indices(const std::vector<int>& labels,
                                            const LabelTable& names, const SplitSpec& spec) {
    if (spec.fractions.size() < 2) throw DataError("split: need at least two fractions");
    double total = 0.0;
    for (double f : spec.fractions) {
        if (!(f > 0.0)) throw DataError("split: fractions must be positive");
        total += f;
    }
    if (std::abs(total - 1.0) > 1e-9) throw DataError("split: fractions must sum to 1");

    std::mt19937_64 rng(spec.seed);
    std::vector<std::vector<int>> parts(spec.fractions.size());

    auto deal = [&](std::vector<int> rows) {
        std::shuffle(rows.begin(), rows.end(), rng);
        const auto counts = allocate(rows.size(), spec.fractions);
        std::size_t cursor = 0;
        for (std::size_t p = 0; p < counts.size(); ++p)
            for (std::size_t k = 0; k < counts[p]; ++k) parts[p].push_back(rows[cursor++]);
    };

    if (spec.stratified) {
        std::map<int, std::vector<int>> by_class;
        for (std::size_t i = 0; i < labels.size(); ++i)
            by_class[labels[i]].push_back(static_cast<int>(i));
        for (auto& [cls, rows] : by_class) {
            if (rows.size() < spec.fractions.size()) {
                const std::string name = cls >= 0 && static_cast<std::size_t>(cls) < names.size()
                                             ? names.name(static_cast<std::size_t>(cls))
                                             : std::to_string(cls);
                throw DataError("split: class '" + name + "' has " + std::to_string(rows.size()) +
                                " rows, fewer than the " + std::to_string(spec.fractions.size()) +
                                " partitions");
            }
            deal(std::move(rows));
        }
    } else {
        std::vector<int> rows(labels.size());
        std::iota(rows.begin(), rows.end(), 0);
        deal(std::move(rows));
    }

    for (auto& part : parts) std::sort(part.begin(), part.end());
    return parts;
}

std::vector<Dataset> split(const Dataset& data, const SplitSpec& spec) {
    const auto parts = split_indices(data.y, data.labels, spec);
    std::vector<Dataset> out;
    out.reserve(parts.size());
    for (const auto& idx : parts) out.push_back(take_rows(data, idx));
    return out;
}

std::vector<int> portion_indices(const std::vector<int>& labels, const LabelTable& names,
                                 double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0) || fraction > 1.0)
        throw DataError("portion: fraction must lie in (0, 1]");
    if (fraction == 1.0) {
        std::vector<int> all(labels.size());
        std::iota(all.begin(), all.end(), 0);
        return all;
    }
    SplitSpec spec;
    spec.fractions = {fraction, 1.0 - fraction};
    spec.seed = seed;
    spec.stratified = true;
    return split_indices(labels, names, spec)[0];
}

} // namespace odxu
