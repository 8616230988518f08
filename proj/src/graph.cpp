#include "qdl/graph.hpp"

#include "qdl/error.hpp"
#include "qdl/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qdl {

std::string_view op_name(OpKind kind) {
	switch (kind) {
	case OpKind::Constant: return "constant";
	case OpKind::Parameter: return "parameter";
	case OpKind::MatMul: return "matmul";
	case OpKind::Add: return "add";
	case OpKind::Sub: return "sub";
	case OpKind::Hadamard: return "hadamard";
	case OpKind::ScalarMul: return "scalar-mul";
	case OpKind::Concat: return "concat";
	case OpKind::Slice: return "slice";
	case OpKind::Reshape: return "reshape";
	case OpKind::Transpose: return "transpose";
	case OpKind::Sigmoid: return "sigmoid";
	case OpKind::Tanh: return "tanh";
	case OpKind::Relu: return "relu";
	case OpKind::Conv1d: return "conv1d";
	case OpKind::Conv2d: return "conv2d";
	case OpKind::ReduceMean: return "reduce-mean";
	case OpKind::ReduceSum: return "reduce-sum";
	case OpKind::ReverseTime: return "reverse-time";
	case OpKind::Pinball: return "pinball-residual-branch";
	}
	return "unknown";
}

const Tensor &Gradients::operator[](ParamId id) const {
	auto it = table_.find(id);
	if (it == table_.end()) {
		throw std::out_of_range("no gradient for parameter " + std::to_string(id));
	}
	return it->second;
}

Tensor &Gradients::operator[](ParamId id) {
	auto it = table_.find(id);
	if (it == table_.end()) {
		throw std::out_of_range("no gradient for parameter " + std::to_string(id));
	}
	return it->second;
}

double Gradients::global_norm() const {
	double sum = 0.0;
	for (const auto &[id, grad] : table_) {
		for (double v : grad.data()) {
			sum += v * v;
		}
	}
	return std::sqrt(sum);
}

namespace {

[[noreturn]] void shape_fail(OpKind kind, const Shape &a, const Shape &b, const std::string &detail) {
	throw ShapeError(std::string(op_name(kind)) + ": " + shape_to_string(a) + " vs " + shape_to_string(b) +
	                 (detail.empty() ? "" : " (" + detail + ")"));
}

bool is_suffix(const Shape &full, const Shape &tail) {
	if (tail.size() > full.size()) {
		return false;
	}
	return std::equal(tail.rbegin(), tail.rend(), full.rbegin());
}

double stable_sigmoid(double x) {
	if (x >= 0.0) {
		return 1.0 / (1.0 + std::exp(-x));
	}
	const double e = std::exp(x);
	return e / (1.0 + e);
}

std::size_t prod(const Shape &shape, std::size_t from, std::size_t to) {
	std::size_t p = 1;
	for (std::size_t i = from; i < to; ++i) {
		p *= shape[i];
	}
	return p;
}

Tensor &grad_slot(std::vector<Tensor> &grads, NodeId id, const Shape &shape) {
	if (grads[id].empty()) {
		grads[id] = Tensor::zeros(shape);
	}
	return grads[id];
}

} // namespace

NodeId Graph::push(Node node) {
	if (!node.value.all_finite()) {
		throw NumericalError("op '" + std::string(op_name(node.kind)) + "'" +
		                     (scope_.empty() ? std::string() : " in layer '" + scope_ + "'") +
		                     " produced non-finite values");
	}
	nodes_.push_back(std::move(node));
	return nodes_.size() - 1;
}

const Graph::Node &Graph::node(NodeId id) const {
	if (id >= nodes_.size()) {
		throw std::out_of_range("node id " + std::to_string(id) + " not on graph");
	}
	return nodes_[id];
}

const Tensor &Graph::value(NodeId id) const {
	return node(id).value;
}

OpKind Graph::kind(NodeId id) const {
	return node(id).kind;
}

NodeId Graph::constant(Tensor value) {
	Node n;
	n.kind = OpKind::Constant;
	n.value = std::move(value);
	return push(std::move(n));
}

NodeId Graph::parameter(ParamId id, const Tensor &value) {
	Node n;
	n.kind = OpKind::Parameter;
	n.value = value;
	n.param = id;
	return push(std::move(n));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
	const auto &va = value(a);
	const auto &vb = value(b);
	if (va.rank() != 2 || vb.rank() != 2 || va.dim(1) != vb.dim(0)) {
		shape_fail(OpKind::MatMul, va.shape(), vb.shape(), "expects [M,K] x [K,N]");
	}
	const kernels::GemmDims d{va.dim(0), vb.dim(1), va.dim(1)};
	std::vector<double> out(d.m * d.n);
	kernels::gemm_nn(d, va.data(), vb.data(), out);
	Node n;
	n.kind = OpKind::MatMul;
	n.inputs = {a, b};
	n.value = Tensor({d.m, d.n}, std::move(out));
	return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
	const auto &va = value(a);
	const auto &vb = value(b);
	if (!is_suffix(va.shape(), vb.shape())) {
		shape_fail(OpKind::Add, va.shape(), vb.shape(), "right operand must match or be a trailing suffix");
	}
	std::vector<double> out(va.size());
	const std::size_t nb = vb.size();
	for (std::size_t i = 0; i < out.size(); ++i) {
		out[i] = va[i] + vb[i % nb];
	}
	Node n;
	n.kind = OpKind::Add;
	n.inputs = {a, b};
	n.value = Tensor(va.shape(), std::move(out));
	return push(std::move(n));
}

NodeId Graph::sub(NodeId a, NodeId b) {
	const auto &va = value(a);
	const auto &vb = value(b);
	if (!is_suffix(va.shape(), vb.shape())) {
		shape_fail(OpKind::Sub, va.shape(), vb.shape(), "right operand must match or be a trailing suffix");
	}
	std::vector<double> out(va.size());
	const std::size_t nb = vb.size();
	for (std::size_t i = 0; i < out.size(); ++i) {
		out[i] = va[i] - vb[i % nb];
	}
	Node n;
	n.kind = OpKind::Sub;
	n.inputs = {a, b};
	n.value = Tensor(va.shape(), std::move(out));
	return push(std::move(n));
}

NodeId Graph::hadamard(NodeId a, NodeId b) {
	const auto &va = value(a);
	const auto &vb = value(b);
	if (va.shape() != vb.shape()) {
		shape_fail(OpKind::Hadamard, va.shape(), vb.shape(), "");
	}
	std::vector<double> out(va.size());
	for (std::size_t i = 0; i < out.size(); ++i) {
		out[i] = va[i] * vb[i];
	}
	Node n;
	n.kind = OpKind::Hadamard;
	n.inputs = {a, b};
	n.value = Tensor(va.shape(), std::move(out));
	return push(std::move(n));
}

NodeId Graph::scalar_mul(NodeId a, double factor) {
	const auto &va = value(a);
	std::vector<double> out(va.size());
	for (std::size_t i = 0; i < out.size(); ++i) {
		out[i] = va[i] * factor;
	}
	Node n;
	n.kind = OpKind::ScalarMul;
	n.inputs = {a};
	n.scalar = factor;
	n.value = Tensor(va.shape(), std::move(out));
	return push(std::move(n));
}

NodeId Graph::concat(std::span<const NodeId> inputs, std::size_t axis) {
	if (inputs.empty()) {
		throw ShapeError("concat: no inputs");
	}
	const Shape &first = value(inputs[0]).shape();
	if (axis >= first.size()) {
		shape_fail(OpKind::Concat, first, first, "axis " + std::to_string(axis) + " out of range");
	}
	Shape out_shape = first;
	out_shape[axis] = 0;
	for (auto id : inputs) {
		const Shape &s = value(id).shape();
		bool ok = s.size() == first.size();
		for (std::size_t i = 0; ok && i < s.size(); ++i) {
			ok = i == axis || s[i] == first[i];
		}
		if (!ok) {
			shape_fail(OpKind::Concat, first, s, "extents must agree off the concat axis");
		}
		out_shape[axis] += s[axis];
	}
	const std::size_t outer = prod(first, 0, axis);
	const std::size_t inner = prod(first, axis + 1, first.size());
	std::vector<double> out(shape_size(out_shape));
	const std::size_t out_row = out_shape[axis] * inner;
	std::size_t offset = 0;
	for (auto id : inputs) {
		const auto &v = value(id);
		const std::size_t chunk = v.dim(axis) * inner;
		for (std::size_t o = 0; o < outer; ++o) {
			std::copy_n(v.data().begin() + o * chunk, chunk, out.begin() + o * out_row + offset);
		}
		offset += chunk;
	}
	Node n;
	n.kind = OpKind::Concat;
	n.inputs.assign(inputs.begin(), inputs.end());
	n.axis = axis;
	n.value = Tensor(std::move(out_shape), std::move(out));
	return push(std::move(n));
}

NodeId Graph::slice(NodeId a, std::size_t axis, std::size_t begin, std::size_t end) {
	const auto &va = value(a);
	if (axis >= va.rank() || begin >= end || end > va.dim(axis)) {
		shape_fail(OpKind::Slice, va.shape(), {axis, begin, end}, "requires axis < rank and begin < end <= extent");
	}
	Shape out_shape = va.shape();
	out_shape[axis] = end - begin;
	const std::size_t outer = prod(va.shape(), 0, axis);
	const std::size_t inner = prod(va.shape(), axis + 1, va.rank());
	const std::size_t in_row = va.dim(axis) * inner;
	const std::size_t chunk = (end - begin) * inner;
	std::vector<double> out(outer * chunk);
	for (std::size_t o = 0; o < outer; ++o) {
		std::copy_n(va.data().begin() + o * in_row + begin * inner, chunk, out.begin() + o * chunk);
	}
	Node n;
	n.kind = OpKind::Slice;
	n.inputs = {a};
	n.axis = axis;
	n.begin = begin;
	n.value = Tensor(std::move(out_shape), std::move(out));
	return push(std::move(n));
}

NodeId Graph::reshape(NodeId a, Shape shape) {
	const auto &va = value(a);
	if (shape_size(shape) != va.size()) {
		shape_fail(OpKind::Reshape, va.shape(), shape, "element counts differ");
	}
	Node n;
	n.kind = OpKind::Reshape;
	n.inputs = {a};
	n.value = Tensor(std::move(shape), va.values());
	return push(std::move(n));
}

NodeId Graph::transpose(NodeId a) {
	const auto &va = value(a);
	if (va.rank() != 2) {
		shape_fail(OpKind::Transpose, va.shape(), va.shape(), "rank-2 only");
	}
	const std::size_t rows = va.dim(0);
	const std::size_t cols = va.dim(1);
	std::vector<double> out(va.size());
	for (std::size_t r = 0; r < rows; ++r) {
		for (std::size_t c = 0; c < cols; ++c) {
			out[c * rows + r] = va[r * cols + c];
		}
	}
	Node n;
	n.kind = OpKind::Transpose;
	n.inputs = {a};
	n.value = Tensor({cols, rows}, std::move(out));
	return push(std::move(n));
}

NodeId Graph::sigmoid(NodeId a) {
	const auto &va = value(a);
	std::vector<double> out(va.size());
	for (std::size_t i = 0; i < out.size(); ++i) {
		out[i] = stable_sigmoid(va[i]);
	}
	Node n;
	n.kind = OpKind::Sigmoid;
	n.inputs = {a};
	n.value = Tensor(va.shape(), std::move(out));
	return push(std::move(n));
}

NodeId Graph::tanh(NodeId a) {
	const auto &va = value(a);
	std::vector<double> out(va.size());
	for (std::size_t i = 0; i < out.size(); ++i) {
		out[i] = std::tanh(va[i]);
	}
	Node n;
	n.kind = OpKind::Tanh;
	n.inputs = {a};
	n.value = Tensor(va.shape(), std::move(out));
	return push(std::move(n));
}

NodeId Graph::relu(NodeId a) {
	const auto &va = value(a);
	std::vector<double> out(va.size());
	for (std::size_t i = 0; i < out.size(); ++i) {
		out[i] = va[i] > 0.0 ? va[i] : 0.0;
	}
	Node n;
	n.kind = OpKind::Relu;
	n.inputs = {a};
	n.value = Tensor(va.shape(), std::move(out));
	return push(std::move(n));
}

NodeId Graph::conv1d(NodeId x, NodeId kernel) {
	const auto &vx = value(x);
	const auto &vk = value(kernel);
	if (vx.rank() != 3 || vk.rank() != 3 || vk.dim(1) != vx.dim(2) || vk.dim(0) > vx.dim(1)) {
		shape_fail(OpKind::Conv1d, vx.shape(), vk.shape(), "expects x [B,L,C] and kernel [K,C,F] with K <= L");
	}
	const std::size_t batch = vx.dim(0);
	const std::size_t length = vx.dim(1);
	const std::size_t channels = vx.dim(2);
	const std::size_t width = vk.dim(0);
	const std::size_t filters = vk.dim(2);
	const std::size_t out_len = length - width + 1;
	const std::size_t patch = width * channels;

	std::vector<double> columns(batch * out_len * patch);
	for (std::size_t b = 0; b < batch; ++b) {
		for (std::size_t t = 0; t < out_len; ++t) {
			std::copy_n(vx.data().begin() + (b * length + t) * channels, patch,
			            columns.begin() + (b * out_len + t) * patch);
		}
	}
	std::vector<double> out(batch * out_len * filters);
	kernels::gemm_nn({batch * out_len, filters, patch}, columns, vk.data(), out);

	Node n;
	n.kind = OpKind::Conv1d;
	n.inputs = {x, kernel};
	n.columns = std::move(columns);
	n.value = Tensor({batch, out_len, filters}, std::move(out));
	return push(std::move(n));
}

NodeId Graph::conv2d(NodeId x, NodeId kernel) {
	const auto &vx = value(x);
	const auto &vk = value(kernel);
	if (vx.rank() != 4 || vk.rank() != 4 || vk.dim(2) != vx.dim(3) || vk.dim(0) > vx.dim(1) ||
	    vk.dim(1) > vx.dim(2)) {
		shape_fail(OpKind::Conv2d, vx.shape(), vk.shape(),
		           "expects x [B,H,W,C] and kernel [KH,KW,C,F] with KH <= H, KW <= W");
	}
	const std::size_t batch = vx.dim(0);
	const std::size_t height = vx.dim(1);
	const std::size_t wid = vx.dim(2);
	const std::size_t channels = vx.dim(3);
	const std::size_t kh = vk.dim(0);
	const std::size_t kw = vk.dim(1);
	const std::size_t filters = vk.dim(3);
	const std::size_t out_h = height - kh + 1;
	const std::size_t out_w = wid - kw + 1;
	const std::size_t row_chunk = kw * channels;
	const std::size_t patch = kh * row_chunk;

	std::vector<double> columns(batch * out_h * out_w * patch);
	for (std::size_t b = 0; b < batch; ++b) {
		for (std::size_t i = 0; i < out_h; ++i) {
			for (std::size_t j = 0; j < out_w; ++j) {
				const std::size_t row = (b * out_h + i) * out_w + j;
				for (std::size_t r = 0; r < kh; ++r) {
					std::copy_n(vx.data().begin() + ((b * height + i + r) * wid + j) * channels, row_chunk,
					            columns.begin() + row * patch + r * row_chunk);
				}
			}
		}
	}
	std::vector<double> out(batch * out_h * out_w * filters);
	kernels::gemm_nn({batch * out_h * out_w, filters, patch}, columns, vk.data(), out);

	Node n;
	n.kind = OpKind::Conv2d;
	n.inputs = {x, kernel};
	n.columns = std::move(columns);
	n.value = Tensor({batch, out_h, out_w, filters}, std::move(out));
	return push(std::move(n));
}

NodeId Graph::reduce_mean(NodeId a) {
	const auto &va = value(a);
	double sum = 0.0;
	for (double v : va.data()) {
		sum += v;
	}
	Node n;
	n.kind = OpKind::ReduceMean;
	n.inputs = {a};
	n.value = Tensor({1}, {sum / static_cast<double>(va.size())});
	return push(std::move(n));
}

NodeId Graph::reduce_sum(NodeId a) {
	const auto &va = value(a);
	double sum = 0.0;
	for (double v : va.data()) {
		sum += v;
	}
	Node n;
	n.kind = OpKind::ReduceSum;
	n.inputs = {a};
	n.value = Tensor({1}, {sum});
	return push(std::move(n));
}

NodeId Graph::reverse_time(NodeId a, std::size_t axis) {
	const auto &va = value(a);
	if (axis >= va.rank()) {
		shape_fail(OpKind::ReverseTime, va.shape(), va.shape(), "axis " + std::to_string(axis) + " out of range");
	}
	const std::size_t outer = prod(va.shape(), 0, axis);
	const std::size_t steps = va.dim(axis);
	const std::size_t inner = prod(va.shape(), axis + 1, va.rank());
	std::vector<double> out(va.size());
	for (std::size_t o = 0; o < outer; ++o) {
		for (std::size_t t = 0; t < steps; ++t) {
			std::copy_n(va.data().begin() + (o * steps + t) * inner, inner,
			            out.begin() + (o * steps + (steps - 1 - t)) * inner);
		}
	}
	Node n;
	n.kind = OpKind::ReverseTime;
	n.inputs = {a};
	n.axis = axis;
	n.value = Tensor(va.shape(), std::move(out));
	return push(std::move(n));
}

NodeId Graph::pinball(NodeId residual, std::span<const double> quantiles) {
	const auto &vr = value(residual);
	if (quantiles.empty() || vr.shape().back() != quantiles.size()) {
		shape_fail(OpKind::Pinball, vr.shape(), {quantiles.size()}, "last axis must index the quantile levels");
	}
	for (double q : quantiles) {
		if (!(q > 0.0 && q < 1.0)) {
			throw InvalidQuantile("quantile level " + std::to_string(q) + " outside (0,1)");
		}
	}
	const std::size_t k = quantiles.size();
	std::vector<double> out(vr.size());
	for (std::size_t i = 0; i < out.size(); ++i) {
		const double q = quantiles[i % k];
		const double r = vr[i];
		out[i] = r >= 0.0 ? q * r : (q - 1.0) * r;
	}
	Node n;
	n.kind = OpKind::Pinball;
	n.inputs = {residual};
	n.quantiles.assign(quantiles.begin(), quantiles.end());
	n.value = Tensor(vr.shape(), std::move(out));
	return push(std::move(n));
}

NodeId Graph::select(NodeId a, std::size_t axis, std::size_t index) {
	const NodeId sliced = slice(a, axis, index, index + 1);
	Shape shape = value(sliced).shape();
	if (shape.size() == 1) {
		return sliced;
	}
	shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
	return reshape(sliced, std::move(shape));
}

Gradients Graph::backward(NodeId loss) {
	if (consumed_) {
		throw std::logic_error("graph already consumed by a backward pass");
	}
	if (value(loss).size() != 1) {
		throw NotScalar("loss node has shape " + shape_to_string(value(loss).shape()));
	}
	consumed_ = true;

	std::vector<Tensor> grads(nodes_.size());
	grads[loss] = Tensor::constant(value(loss).shape(), 1.0);

	Gradients result;
	for (NodeId id = loss + 1; id-- > 0;) {
		if (grads[id].empty()) {
			continue;
		}
		Tensor grad = std::move(grads[id]);
		grads[id] = Tensor();
		const Node &n = nodes_[id];
		if (n.kind == OpKind::Parameter) {
			if (result.contains(*n.param)) {
				auto &acc = result[*n.param];
				for (std::size_t i = 0; i < acc.size(); ++i) {
					acc[i] += grad[i];
				}
			} else {
				result.set(*n.param, std::move(grad));
			}
			continue;
		}
		backprop_node(id, grad, grads);
	}
	for (const auto &n : nodes_) {
		if (n.kind == OpKind::Parameter && !result.contains(*n.param)) {
			result.set(*n.param, Tensor::zeros(n.value.shape()));
		}
	}
	return result;
}

void Graph::backprop_node(NodeId id, const Tensor &g, std::vector<Tensor> &grads) {
	const Node &n = nodes_[id];
	switch (n.kind) {
	case OpKind::Constant:
	case OpKind::Parameter:
		return;
	case OpKind::MatMul: {
		const auto &va = value(n.inputs[0]);
		const auto &vb = value(n.inputs[1]);
		const std::size_t m = va.dim(0);
		const std::size_t k = va.dim(1);
		const std::size_t cols = vb.dim(1);
		auto &ga = grad_slot(grads, n.inputs[0], va.shape());
		kernels::gemm_nt({m, k, cols}, g.data(), vb.data(), ga.data(), true);
		auto &gb = grad_slot(grads, n.inputs[1], vb.shape());
		kernels::gemm_tn({k, cols, m}, va.data(), g.data(), gb.data(), true);
		return;
	}
	case OpKind::Add:
	case OpKind::Sub: {
		const double sign = n.kind == OpKind::Add ? 1.0 : -1.0;
		auto &ga = grad_slot(grads, n.inputs[0], value(n.inputs[0]).shape());
		for (std::size_t i = 0; i < g.size(); ++i) {
			ga[i] += g[i];
		}
		auto &gb = grad_slot(grads, n.inputs[1], value(n.inputs[1]).shape());
		const std::size_t nb = gb.size();
		for (std::size_t i = 0; i < g.size(); ++i) {
			gb[i % nb] += sign * g[i];
		}
		return;
	}
	case OpKind::Hadamard: {
		const auto &va = value(n.inputs[0]);
		const auto &vb = value(n.inputs[1]);
		auto &ga = grad_slot(grads, n.inputs[0], va.shape());
		for (std::size_t i = 0; i < g.size(); ++i) {
			ga[i] += g[i] * vb[i];
		}
		auto &gb = grad_slot(grads, n.inputs[1], vb.shape());
		for (std::size_t i = 0; i < g.size(); ++i) {
			gb[i] += g[i] * va[i];
		}
		return;
	}
	case OpKind::ScalarMul: {
		auto &ga = grad_slot(grads, n.inputs[0], value(n.inputs[0]).shape());
		for (std::size_t i = 0; i < g.size(); ++i) {
			ga[i] += g[i] * n.scalar;
		}
		return;
	}
	case OpKind::Concat: {
		const Shape &out_shape = n.value.shape();
		const std::size_t outer = prod(out_shape, 0, n.axis);
		const std::size_t inner = prod(out_shape, n.axis + 1, out_shape.size());
		const std::size_t out_row = out_shape[n.axis] * inner;
		std::size_t offset = 0;
		for (auto in : n.inputs) {
			const auto &vi = value(in);
			auto &gi = grad_slot(grads, in, vi.shape());
			const std::size_t chunk = vi.dim(n.axis) * inner;
			for (std::size_t o = 0; o < outer; ++o) {
				for (std::size_t c = 0; c < chunk; ++c) {
					gi[o * chunk + c] += g[o * out_row + offset + c];
				}
			}
			offset += chunk;
		}
		return;
	}
	case OpKind::Slice: {
		const auto &va = value(n.inputs[0]);
		auto &ga = grad_slot(grads, n.inputs[0], va.shape());
		const std::size_t outer = prod(va.shape(), 0, n.axis);
		const std::size_t inner = prod(va.shape(), n.axis + 1, va.rank());
		const std::size_t in_row = va.dim(n.axis) * inner;
		const std::size_t chunk = n.value.dim(n.axis) * inner;
		for (std::size_t o = 0; o < outer; ++o) {
			for (std::size_t c = 0; c < chunk; ++c) {
				ga[o * in_row + n.begin * inner + c] += g[o * chunk + c];
			}
		}
		return;
	}
	case OpKind::Reshape: {
		auto &ga = grad_slot(grads, n.inputs[0], value(n.inputs[0]).shape());
		for (std::size_t i = 0; i < g.size(); ++i) {
			ga[i] += g[i];
		}
		return;
	}
	case OpKind::Transpose: {
		const auto &va = value(n.inputs[0]);
		auto &ga = grad_slot(grads, n.inputs[0], va.shape());
		const std::size_t rows = va.dim(0);
		const std::size_t cols = va.dim(1);
		for (std::size_t r = 0; r < rows; ++r) {
			for (std::size_t c = 0; c < cols; ++c) {
				ga[r * cols + c] += g[c * rows + r];
			}
		}
		return;
	}
	case OpKind::Sigmoid: {
		auto &ga = grad_slot(grads, n.inputs[0], n.value.shape());
		for (std::size_t i = 0; i < g.size(); ++i) {
			const double s = n.value[i];
			ga[i] += g[i] * s * (1.0 - s);
		}
		return;
	}
	case OpKind::Tanh: {
		auto &ga = grad_slot(grads, n.inputs[0], n.value.shape());
		for (std::size_t i = 0; i < g.size(); ++i) {
			const double t = n.value[i];
			ga[i] += g[i] * (1.0 - t * t);
		}
		return;
	}
	case OpKind::Relu: {
		const auto &va = value(n.inputs[0]);
		auto &ga = grad_slot(grads, n.inputs[0], va.shape());
		for (std::size_t i = 0; i < g.size(); ++i) {
			if (va[i] > 0.0) {
				ga[i] += g[i];
			}
		}
		return;
	}
	case OpKind::Conv1d:
	case OpKind::Conv2d: {
		const auto &vx = value(n.inputs[0]);
		const auto &vk = value(n.inputs[1]);
		const std::size_t filters = vk.shape().back();
		const std::size_t patch = vk.size() / filters;
		const std::size_t rows = n.value.size() / filters;

		auto &gk = grad_slot(grads, n.inputs[1], vk.shape());
		kernels::gemm_tn({patch, filters, rows}, n.columns, g.data(), gk.data(), true);

		std::vector<double> dcols(rows * patch);
		kernels::gemm_nt({rows, patch, filters}, g.data(), vk.data(), dcols, false);

		auto &gx = grad_slot(grads, n.inputs[0], vx.shape());
		if (n.kind == OpKind::Conv1d) {
			const std::size_t length = vx.dim(1);
			const std::size_t channels = vx.dim(2);
			const std::size_t out_len = n.value.dim(1);
			for (std::size_t b = 0; b < vx.dim(0); ++b) {
				for (std::size_t t = 0; t < out_len; ++t) {
					const double *src = dcols.data() + (b * out_len + t) * patch;
					double *dst = gx.data().data() + (b * length + t) * channels;
					for (std::size_t p = 0; p < patch; ++p) {
						dst[p] += src[p];
					}
				}
			}
		} else {
			const std::size_t height = vx.dim(1);
			const std::size_t wid = vx.dim(2);
			const std::size_t channels = vx.dim(3);
			const std::size_t kh = vk.dim(0);
			const std::size_t row_chunk = vk.dim(1) * channels;
			const std::size_t out_h = n.value.dim(1);
			const std::size_t out_w = n.value.dim(2);
			for (std::size_t b = 0; b < vx.dim(0); ++b) {
				for (std::size_t i = 0; i < out_h; ++i) {
					for (std::size_t j = 0; j < out_w; ++j) {
						const std::size_t row = (b * out_h + i) * out_w + j;
						for (std::size_t r = 0; r < kh; ++r) {
							const double *src = dcols.data() + row * patch + r * row_chunk;
							double *dst = gx.data().data() + ((b * height + i + r) * wid + j) * channels;
							for (std::size_t p = 0; p < row_chunk; ++p) {
								dst[p] += src[p];
							}
						}
					}
				}
			}
		}
		return;
	}
	case OpKind::ReduceMean:
	case OpKind::ReduceSum: {
		const auto &va = value(n.inputs[0]);
		auto &ga = grad_slot(grads, n.inputs[0], va.shape());
		const double scale = n.kind == OpKind::ReduceMean ? g[0] / static_cast<double>(va.size()) : g[0];
		for (std::size_t i = 0; i < ga.size(); ++i) {
			ga[i] += scale;
		}
		return;
	}
	case OpKind::ReverseTime: {
		const auto &va = value(n.inputs[0]);
		auto &ga = grad_slot(grads, n.inputs[0], va.shape());
		const std::size_t outer = prod(va.shape(), 0, n.axis);
		const std::size_t steps = va.dim(n.axis);
		const std::size_t inner = prod(va.shape(), n.axis + 1, va.rank());
		for (std::size_t o = 0; o < outer; ++o) {
			for (std::size_t t = 0; t < steps; ++t) {
				for (std::size_t c = 0; c < inner; ++c) {
					ga[(o * steps + t) * inner + c] += g[(o * steps + (steps - 1 - t)) * inner + c];
				}
			}
		}
		return;
	}
	case OpKind::Pinball: {
		const auto &vr = value(n.inputs[0]);
		auto &gr = grad_slot(grads, n.inputs[0], vr.shape());
		const std::size_t k = n.quantiles.size();
		for (std::size_t i = 0; i < g.size(); ++i) {
			const double q = n.quantiles[i % k];
			gr[i] += g[i] * (vr[i] >= 0.0 ? q : q - 1.0);
		}
		return;
	}
	}
}

} // namespace qdl
