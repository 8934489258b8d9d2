#pragma once

#include <limits>

#include "odxu/errors.hpp"

namespace odxu {

// Halt when the loss fails to improve on the best seen value by more than
// delta for eta consecutive epochs.
struct EarlyStop {
    int eta = 10;
    double delta = 1e-3;
};

class EarlyStopMonitor {
public:
    explicit EarlyStopMonitor(EarlyStop rule) : rule_(rule) {
        if (rule_.eta < 1) throw DataError("early stop: eta must be >= 1");
        if (!(rule_.delta > 0)) throw DataError("early stop: delta must be > 0");
    }

    // Records one epoch's loss; true means training should halt after it.
    // The first epoch only sets the baseline.
    bool observe(double loss) {
        if (first_) {
            first_ = false;
            best_ = loss;
            return false;
        }
        const bool improved = loss < best_ - rule_.delta;
        if (loss < best_) best_ = loss;
        stale_ = improved ? 0 : stale_ + 1;
        return stale_ >= rule_.eta;
    }

private:
    EarlyStop rule_;
    double best_ = std::numeric_limits<double>::infinity();
    int stale_ = 0;
    bool first_ = true;
};

} // namespace odxu
