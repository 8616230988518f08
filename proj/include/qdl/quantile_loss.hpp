#pragma once

#include "qdl/graph.hpp"
#include "qdl/models.hpp"
#include "qdl/tensor.hpp"

#include <optional>
#include <vector>

namespace qdl {

// Strictly increasing quantile levels in (0,1).
class QuantileSet {
public:
	QuantileSet() : QuantileSet(default_quantiles()) {}
	explicit QuantileSet(std::vector<double> levels);

	const std::vector<double> &levels() const { return levels_; }
	std::size_t size() const { return levels_.size(); }
	double operator[](std::size_t i) const { return levels_[i]; }
	std::optional<std::size_t> index_of(double level) const;
	// Throws MissingMedian when 0.5 is not a level.
	std::size_t median_index() const;

private:
	std::vector<double> levels_;
};

struct LossValue {
	double total = 0.0;
	// [m, K] mean pinball per (horizon, quantile) over the batch.
	Tensor breakdown;
};

// q*(y - yhat) if y >= yhat else (q - 1)*(y - yhat).
double pinball(double y, double y_hat, double q);

// targets [B, m]; predictions [B, m, K] (vector-based) or [B, m*K] flat
// horizon-major (grouped). The total is the uniform mean over all cells.
LossValue quantile_loss_batch(const Tensor &targets, const Tensor &predictions, const QuantileSet &quantiles,
                              OutputArrangement arrangement = OutputArrangement::VectorBased);

// Mean squared error; predictions may carry a trailing singleton axis.
double mse_loss_batch(const Tensor &targets, const Tensor &predictions);

// predictions [B, m, K] -> [B, m], the q = 0.5 slice.
Tensor median_extract(const Tensor &predictions, const QuantileSet &quantiles);

// Graph forms used for training; predictions is a node in either layout.
NodeId quantile_loss_node(Graph &graph, NodeId predictions, const Tensor &targets, const QuantileSet &quantiles);
NodeId mse_loss_node(Graph &graph, NodeId predictions, const Tensor &targets);

} // namespace qdl
