#pragma once

#include "fibnet/train.hpp"

#include <iosfwd>

namespace fibnet {

// Two panels, accuracy and loss against epoch, each with a train and a
// validation polyline holding one point per history record.
void write_curves_svg(std::ostream &os, const TrainHistory &h);

// Plain-text run summary: final and best-validation epochs, mean seconds per epoch.
void write_run_summary(std::ostream &os, const TrainHistory &h);

}  // namespace fibnet
