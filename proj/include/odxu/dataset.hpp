#pragma once

#include <Eigen/Core>
#include <vector>

#include "odxu/labels.hpp"

namespace odxu {

// Rows are samples, columns are features; y holds interned label ids.
// Used both for 1500-wide normalized payload features and 12-wide latents.
struct Dataset {
    Eigen::MatrixXd X;
    std::vector<int> y;
    LabelTable labels;

    Eigen::Index rows() const { return X.rows(); }
    Eigen::Index cols() const { return X.cols(); }
};

Dataset take_rows(const Dataset& d, const std::vector<int>& idx);

// Distinct labels that actually occur in y.
int distinct_class_count(const std::vector<int>& y);

} // namespace odxu
