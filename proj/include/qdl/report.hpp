#pragma once

#include "qdl/experiment.hpp"

#include <filesystem>

namespace qdl {

// Columns: model,strategy,quantile,metric,key,mean,ci_half_width. Values are
// written with 17 significant digits; an empty aggregate gives the header
// only.
void write_aggregate_csv(const std::filesystem::path &path, const AggregateReport &report);
std::vector<AggregateCell> read_aggregate_csv(const std::filesystem::path &path);

// Model, Strategy, Mean, Step 1..Step m, cells "mean ± half-width".
void write_table_csv(const std::filesystem::path &path, const AggregateReport &report);

// One row per (test window, horizon): target then one column per quantile.
void write_predictions_csv(const std::filesystem::path &path, const Tensor &targets, const Tensor &predictions,
                           const std::vector<double> &quantiles);

void write_rmse_svg(const std::filesystem::path &path, const AggregateReport &report);

// Step-1 targets against the median with the [lo, hi] band shaded.
void write_band_svg(const std::filesystem::path &path, const Tensor &targets, const Tensor &predictions,
                    const std::vector<double> &quantiles, double lo, double hi);

} // namespace qdl
