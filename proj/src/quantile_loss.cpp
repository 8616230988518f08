#include "qdl/quantile_loss.hpp"

#include "qdl/error.hpp"

namespace qdl {

QuantileSet::QuantileSet(std::vector<double> levels) : levels_(std::move(levels)) {
	validate_quantiles(levels_);
}

std::optional<std::size_t> QuantileSet::index_of(double level) const {
	for (std::size_t i = 0; i < levels_.size(); ++i) {
		if (levels_[i] == level) {
			return i;
		}
	}
	return std::nullopt;
}

std::size_t QuantileSet::median_index() const {
	auto idx = index_of(0.5);
	if (!idx) {
		throw MissingMedian("0.5 is not among the quantile levels");
	}
	return *idx;
}

double pinball(double y, double y_hat, double q) {
	if (!(q > 0.0 && q < 1.0)) {
		throw InvalidQuantile("quantile level " + std::to_string(q) + " outside (0,1)");
	}
	const double u = y - y_hat;
	return u >= 0.0 ? q * u : (q - 1.0) * u;
}

namespace {

// Checks the layout and returns (B, m).
std::pair<std::size_t, std::size_t> check_layout(const Tensor &targets, const Tensor &predictions, std::size_t k,
                                                 OutputArrangement arrangement) {
	if (targets.rank() != 2) {
		throw ShapeError("targets must be [B,m], got " + shape_to_string(targets.shape()));
	}
	const std::size_t batch = targets.dim(0);
	const std::size_t m = targets.dim(1);
	if (arrangement == OutputArrangement::Grouped) {
		if (predictions.rank() != 2 || predictions.dim(0) != batch || predictions.dim(1) != m * k) {
			throw LayoutError("grouped predictions must be [B, m*K] = [" + std::to_string(batch) + "," +
			                  std::to_string(m * k) + "], got " + shape_to_string(predictions.shape()));
		}
	} else if (predictions.shape() != Shape{batch, m, k}) {
		throw ShapeError("predictions " + shape_to_string(predictions.shape()) + " vs targets " +
		                 shape_to_string(targets.shape()) + " with " + std::to_string(k) + " quantiles");
	}
	return {batch, m};
}

Tensor replicate_targets(const Tensor &targets, std::size_t k) {
	std::vector<double> out(targets.size() * k);
	for (std::size_t i = 0; i < targets.size(); ++i) {
		for (std::size_t j = 0; j < k; ++j) {
			out[i * k + j] = targets[i];
		}
	}
	return Tensor({targets.dim(0), targets.dim(1), k}, std::move(out));
}

} // namespace

LossValue quantile_loss_batch(const Tensor &targets, const Tensor &predictions, const QuantileSet &quantiles,
                              OutputArrangement arrangement) {
	const std::size_t k = quantiles.size();
	const auto [batch, m] = check_layout(targets, predictions, k, arrangement);
	std::vector<double> cells(m * k, 0.0);
	for (std::size_t b = 0; b < batch; ++b) {
		for (std::size_t h = 0; h < m; ++h) {
			const double y = targets[b * m + h];
			for (std::size_t j = 0; j < k; ++j) {
				cells[h * k + j] += pinball(y, predictions[(b * m + h) * k + j], quantiles[j]);
			}
		}
	}
	double total = 0.0;
	for (auto &c : cells) {
		c /= static_cast<double>(batch);
		total += c;
	}
	return {total / static_cast<double>(cells.size()), Tensor({m, k}, std::move(cells))};
}

double mse_loss_batch(const Tensor &targets, const Tensor &predictions) {
	const bool squeezable = predictions.rank() == targets.rank() + 1 && predictions.shape().back() == 1;
	if (targets.size() != predictions.size() || (targets.shape() != predictions.shape() && !squeezable)) {
		throw ShapeError("mse: " + shape_to_string(targets.shape()) + " vs " + shape_to_string(predictions.shape()));
	}
	double sum = 0.0;
	for (std::size_t i = 0; i < targets.size(); ++i) {
		const double r = targets[i] - predictions[i];
		sum += r * r;
	}
	return sum / static_cast<double>(targets.size());
}

Tensor median_extract(const Tensor &predictions, const QuantileSet &quantiles) {
	const std::size_t mid = quantiles.median_index();
	if (predictions.rank() != 3 || predictions.dim(2) != quantiles.size()) {
		throw ShapeError("predictions must be [B,m,K], got " + shape_to_string(predictions.shape()));
	}
	const std::size_t k = quantiles.size();
	const std::size_t cells = predictions.dim(0) * predictions.dim(1);
	std::vector<double> out(cells);
	for (std::size_t i = 0; i < cells; ++i) {
		out[i] = predictions[i * k + mid];
	}
	return Tensor({predictions.dim(0), predictions.dim(1)}, std::move(out));
}

NodeId quantile_loss_node(Graph &graph, NodeId predictions, const Tensor &targets, const QuantileSet &quantiles) {
	const std::size_t k = quantiles.size();
	const auto &shape = graph.value(predictions).shape();
	const auto arrangement = shape.size() == 2 ? OutputArrangement::Grouped : OutputArrangement::VectorBased;
	check_layout(targets, graph.value(predictions), k, arrangement);
	NodeId pred = predictions;
	if (arrangement == OutputArrangement::Grouped) {
		pred = graph.reshape(predictions, {targets.dim(0), targets.dim(1), k});
	}
	const NodeId residual = graph.sub(graph.constant(replicate_targets(targets, k)), pred);
	return graph.reduce_mean(graph.pinball(residual, quantiles.levels()));
}

NodeId mse_loss_node(Graph &graph, NodeId predictions, const Tensor &targets) {
	const auto &pv = graph.value(predictions);
	if (pv.size() != targets.size()) {
		throw ShapeError("mse: " + shape_to_string(targets.shape()) + " vs " + shape_to_string(pv.shape()));
	}
	const NodeId diff = graph.sub(predictions, graph.constant(targets.reshaped(pv.shape())));
	return graph.reduce_mean(graph.hadamard(diff, diff));
}

} // namespace qdl
