#include "odxu/dataset.hpp"

#include <set>

namespace odxu {

Dataset take_rows(const Dataset& d, const std::vector<int>& idx) {
    Dataset out;
    out.labels = d.labels;
    out.X.resize(static_cast<Eigen::Index>(idx.size()), d.X.cols());
    out.y.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out.X.row(static_cast<Eigen::Index>(i)) = d.X.row(idx[i]);
        out.y[i] = d.y[static_cast<std::size_t>(idx[i])];
    }
    return out;
}

int distinct_class_count(const std::vector<int>& y) {
    std::set<int> seen(y.begin(), y.end());
    return static_cast<int>(seen.size());
}

} // namespace odxu
