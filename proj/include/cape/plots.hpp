#pragma once

#include <string_view>
#include <vector>

#include "cape/csv.hpp"
#include "cape/pipeline.hpp"
#include "cape/svg.hpp"

namespace cape {

/// Per-bin (q, p_emp) points against the y = x diagonal.
Chart reliability_chart(const CsvTable& reliability);

/// One panel each for train_loss, val_loss, brier and kl: raw series at low
/// opacity, 3-epoch moving averages on top, and a marker where CaPE starts.
std::vector<Chart> learning_curve_charts(const CsvTable& epochs);

enum class SweepMetric { kEce, kKl };

/// Metric against event rate: one solid (CaPE) and one dashed (early-stop
/// BCE) series per dataset size.
Chart sweep_chart(const SweepReport& report, SweepMetric metric);

}  // namespace cape
