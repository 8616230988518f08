#pragma once

#include "qdl/quantile_loss.hpp"
#include "qdl/tensor.hpp"

#include <span>
#include <string>
#include <vector>

namespace qdl {

struct HorizonRmse {
	std::vector<double> per_horizon;
	double mean = 0.0;
};

// sqrt(mean((y - yhat)^2)). Throws EmptyEval on empty input.
double rmse(std::span<const double> targets, std::span<const double> predictions);

// targets, predictions [n, m]: RMSE per horizon column and their mean.
HorizonRmse rmse(const Tensor &targets, const Tensor &predictions);

// targets [n, m], predictions [n, m, K]. Mean-over-horizons RMSE of every
// quantile slice. Requires 0.5 in Q.
std::vector<double> quantile_rmse(const Tensor &targets, const Tensor &predictions, const QuantileSet &quantiles);

// Per-horizon RMSE of one quantile slice.
HorizonRmse slice_rmse(const Tensor &targets, const Tensor &predictions, std::size_t slice);

// Fraction of target cells inside [yhat_lo, yhat_hi]. Throws MissingQuantile
// when either level is absent and ConfigError unless q_lo < q_hi.
double coverage(const Tensor &targets, const Tensor &predictions, const QuantileSet &quantiles, double q_lo,
                double q_hi);

// Fraction of (sample, horizon) cells where some adjacent pair of quantile
// predictions is out of order. Requires |Q| >= 2.
double crossing_rate(const Tensor &predictions, const QuantileSet &quantiles);

struct Interval {
	double mean = 0.0;
	// 1.96 * s / sqrt(R), s the sample standard deviation; zero for R < 2.
	double half_width = 0.0;
};

Interval mean_interval(std::span<const double> values);

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view text);

} // namespace qdl
