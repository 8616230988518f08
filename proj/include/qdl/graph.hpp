#pragma once

#include "qdl/tensor.hpp"

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qdl {

using NodeId = std::size_t;
using ParamId = std::size_t;

enum class OpKind {
	Constant,
	Parameter,
	MatMul,
	Add,
	Sub,
	Hadamard,
	ScalarMul,
	Concat,
	Slice,
	Reshape,
	Transpose,
	Sigmoid,
	Tanh,
	Relu,
	Conv1d,
	Conv2d,
	ReduceMean,
	ReduceSum,
	ReverseTime,
	Pinball,
};

std::string_view op_name(OpKind kind);

// Gradient table keyed by parameter id. Every parameter registered on the
// graph has an entry; parameters the loss does not depend on hold zeros.
class Gradients {
public:
	bool contains(ParamId id) const { return table_.contains(id); }
	const Tensor &operator[](ParamId id) const;
	Tensor &operator[](ParamId id);
	std::size_t size() const { return table_.size(); }
	const std::map<ParamId, Tensor> &table() const { return table_; }

	void set(ParamId id, Tensor grad) { table_[id] = std::move(grad); }

	// Euclidean norm over every entry.
	double global_norm() const;

private:
	std::map<ParamId, Tensor> table_;
};

// Reverse-mode tape. Nodes are appended in creation order, so ids are a
// topological order of the (acyclic) graph. A Graph belongs to one thread
// for its whole life; build a fresh graph per forward/backward pass.
//
// Broadcasting is limited to add/sub where the right operand's shape is a
// suffix of the left operand's shape (bias over a batch).
//
// Kinks: relu'(0) = 0; the pinball subgradient at a zero residual is q.
class Graph {
public:
	NodeId constant(Tensor value);
	NodeId parameter(ParamId id, const Tensor &value);

	NodeId matmul(NodeId a, NodeId b);
	NodeId add(NodeId a, NodeId b);
	NodeId sub(NodeId a, NodeId b);
	NodeId hadamard(NodeId a, NodeId b);
	NodeId scalar_mul(NodeId a, double factor);
	NodeId concat(std::span<const NodeId> inputs, std::size_t axis);
	NodeId slice(NodeId a, std::size_t axis, std::size_t begin, std::size_t end);
	NodeId reshape(NodeId a, Shape shape);
	NodeId transpose(NodeId a);
	NodeId sigmoid(NodeId a);
	NodeId tanh(NodeId a);
	NodeId relu(NodeId a);
	// x [B, L, C], kernel [K, C, F] -> [B, L-K+1, F]; stride 1, valid padding,
	// cross-correlation (no kernel flip).
	NodeId conv1d(NodeId x, NodeId kernel);
	// x [B, H, W, C], kernel [KH, KW, C, F] -> [B, H-KH+1, W-KW+1, F].
	NodeId conv2d(NodeId x, NodeId kernel);
	NodeId reduce_mean(NodeId a);
	NodeId reduce_sum(NodeId a);
	NodeId reverse_time(NodeId a, std::size_t axis = 1);
	// Elementwise check loss on residuals y - yhat. The last axis indexes
	// quantile levels: out = q*r if r >= 0 else (q-1)*r.
	NodeId pinball(NodeId residual, std::span<const double> quantiles);

	// slice(axis, index, index+1) with that axis removed.
	NodeId select(NodeId a, std::size_t axis, std::size_t index);

	const Tensor &value(NodeId id) const;
	OpKind kind(NodeId id) const;
	std::size_t size() const { return nodes_.size(); }

	// Layer label attached to numerical errors raised by subsequent ops.
	void set_scope(std::string scope) { scope_ = std::move(scope); }

	// Reverse sweep from a scalar loss. The tape is consumed: a second call
	// throws std::logic_error.
	Gradients backward(NodeId loss);

private:
	struct Node {
		OpKind kind = OpKind::Constant;
		std::vector<NodeId> inputs;
		Tensor value;
		std::optional<ParamId> param;
		std::size_t axis = 0;
		std::size_t begin = 0;
		double scalar = 0.0;
		std::vector<double> quantiles;
		// im2col buffer kept for the convolution backward pass.
		std::vector<double> columns;
	};

	NodeId push(Node node);
	const Node &node(NodeId id) const;
	void backprop_node(NodeId id, const Tensor &grad, std::vector<Tensor> &grads);

	std::vector<Node> nodes_;
	std::string scope_;
	bool consumed_ = false;
};

} // namespace qdl
