#include "qdl/metrics.hpp"

#include "qdl/error.hpp"

#include <cmath>

namespace qdl {

namespace {

void check_pair(const Tensor &targets, const Tensor &predictions) {
	if (targets.rank() != 2) {
		throw ShapeError("targets must be [n, m], got " + shape_to_string(targets.shape()));
	}
	const bool same = predictions.shape() == targets.shape();
	const bool sliced = predictions.rank() == 3 && predictions.dim(0) == targets.dim(0) &&
	                    predictions.dim(1) == targets.dim(1);
	if (!same && !sliced) {
		throw ShapeError("predictions " + shape_to_string(predictions.shape()) + " do not match targets " +
		                 shape_to_string(targets.shape()));
	}
}

} // namespace

double rmse(std::span<const double> targets, std::span<const double> predictions) {
	if (targets.empty()) {
		throw EmptyEval("rmse of an empty sample");
	}
	if (targets.size() != predictions.size()) {
		throw ShapeError("rmse: " + std::to_string(targets.size()) + " targets vs " +
		                 std::to_string(predictions.size()) + " predictions");
	}
	double ss = 0.0;
	for (std::size_t i = 0; i < targets.size(); ++i) {
		const double r = targets[i] - predictions[i];
		ss += r * r;
	}
	return std::sqrt(ss / static_cast<double>(targets.size()));
}

HorizonRmse slice_rmse(const Tensor &targets, const Tensor &predictions, std::size_t slice) {
	check_pair(targets, predictions);
	const std::size_t n = targets.dim(0), m = targets.dim(1);
	const std::size_t k = predictions.rank() == 3 ? predictions.dim(2) : 1;
	if (slice >= k) {
		throw ShapeError("quantile slice " + std::to_string(slice) + " out of range");
	}
	if (n == 0) {
		throw EmptyEval("rmse of an empty sample");
	}
	HorizonRmse out;
	out.per_horizon.assign(m, 0.0);
	for (std::size_t h = 0; h < m; ++h) {
		double ss = 0.0;
		for (std::size_t i = 0; i < n; ++i) {
			const double r = targets[i * m + h] - predictions[(i * m + h) * k + slice];
			ss += r * r;
		}
		out.per_horizon[h] = std::sqrt(ss / static_cast<double>(n));
		out.mean += out.per_horizon[h];
	}
	out.mean /= static_cast<double>(m);
	return out;
}

HorizonRmse rmse(const Tensor &targets, const Tensor &predictions) {
	if (predictions.shape() != targets.shape()) {
		throw ShapeError("predictions " + shape_to_string(predictions.shape()) + " do not match targets " +
		                 shape_to_string(targets.shape()));
	}
	return slice_rmse(targets, predictions, 0);
}

std::vector<double> quantile_rmse(const Tensor &targets, const Tensor &predictions, const QuantileSet &quantiles) {
	quantiles.median_index();
	if (predictions.rank() != 3 || predictions.dim(2) != quantiles.size()) {
		throw ShapeError("predictions " + shape_to_string(predictions.shape()) + " do not carry " +
		                 std::to_string(quantiles.size()) + " quantiles");
	}
	std::vector<double> out;
	for (std::size_t q = 0; q < quantiles.size(); ++q) {
		out.push_back(slice_rmse(targets, predictions, q).mean);
	}
	return out;
}

double coverage(const Tensor &targets, const Tensor &predictions, const QuantileSet &quantiles, double q_lo,
                double q_hi) {
	if (!(q_lo < q_hi)) {
		throw ConfigError("coverage band needs q_lo < q_hi");
	}
	const auto lo = quantiles.index_of(q_lo);
	const auto hi = quantiles.index_of(q_hi);
	if (!lo || !hi) {
		throw MissingQuantile("coverage band [" + std::to_string(q_lo) + ", " + std::to_string(q_hi) +
		                      "] not in the quantile set");
	}
	check_pair(targets, predictions);
	if (predictions.rank() != 3 || predictions.dim(2) != quantiles.size()) {
		throw ShapeError("predictions " + shape_to_string(predictions.shape()) + " do not carry the quantile set");
	}
	const std::size_t cells = targets.size(), k = quantiles.size();
	if (cells == 0) {
		throw EmptyEval("coverage of an empty sample");
	}
	std::size_t inside = 0;
	for (std::size_t c = 0; c < cells; ++c) {
		const double y = targets[c];
		if (y >= predictions[c * k + *lo] && y <= predictions[c * k + *hi]) {
			++inside;
		}
	}
	return static_cast<double>(inside) / static_cast<double>(cells);
}

double crossing_rate(const Tensor &predictions, const QuantileSet &quantiles) {
	const std::size_t k = quantiles.size();
	if (k < 2) {
		throw ConfigError("crossing rate needs at least two quantiles");
	}
	if (predictions.rank() != 3 || predictions.dim(2) != k) {
		throw ShapeError("predictions " + shape_to_string(predictions.shape()) + " do not carry the quantile set");
	}
	const std::size_t cells = predictions.dim(0) * predictions.dim(1);
	if (cells == 0) {
		throw EmptyEval("crossing rate of an empty sample");
	}
	std::size_t crossed = 0;
	for (std::size_t c = 0; c < cells; ++c) {
		for (std::size_t q = 0; q + 1 < k; ++q) {
			if (predictions[c * k + q] > predictions[c * k + q + 1]) {
				++crossed;
				break;
			}
		}
	}
	return static_cast<double>(crossed) / static_cast<double>(cells);
}

Interval mean_interval(std::span<const double> values) {
	Interval out;
	const std::size_t r = values.size();
	if (r == 0) {
		return out;
	}
	for (double v : values) {
		out.mean += v;
	}
	out.mean /= static_cast<double>(r);
	if (r < 2) {
		return out;
	}
	double ss = 0.0;
	for (double v : values) {
		ss += (v - out.mean) * (v - out.mean);
	}
	const double s = std::sqrt(ss / static_cast<double>(r - 1));
	out.half_width = 1.96 * s / std::sqrt(static_cast<double>(r));
	return out;
}

std::uint64_t fnv1a(std::string_view text) {
	std::uint64_t hash = 0xcbf29ce484222325ULL;
	for (unsigned char ch : text) {
		hash ^= ch;
		hash *= 0x100000001b3ULL;
	}
	return hash;
}

} // namespace qdl
