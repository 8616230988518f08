#include "qdl/models.hpp"

#include "qdl/error.hpp"

#include <algorithm>
#include <map>

namespace qdl {

std::string_view family_name(Family family) {
	switch (family) {
	case Family::Lstm: return "lstm";
	case Family::BdLstm: return "bdlstm";
	case Family::EdLstm: return "edlstm";
	case Family::ConvLstm: return "convlstm";
	case Family::Linear: return "linear";
	}
	return "unknown";
}

Family parse_family(std::string_view name) {
	static const std::map<std::string_view, Family> kNames{
	    {"lstm", Family::Lstm},         {"bdlstm", Family::BdLstm}, {"edlstm", Family::EdLstm},
	    {"convlstm", Family::ConvLstm}, {"linear", Family::Linear},
	};
	auto it = kNames.find(name);
	if (it == kNames.end()) {
		throw ConfigError("unknown model family '" + std::string(name) + "'");
	}
	return it->second;
}

std::string_view strategy_name(Strategy strategy) {
	return strategy == Strategy::Univariate ? "univariate" : "multivariate";
}

Strategy parse_strategy(std::string_view name) {
	if (name == "univariate") {
		return Strategy::Univariate;
	}
	if (name == "multivariate") {
		return Strategy::Multivariate;
	}
	throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

std::string_view arrangement_name(OutputArrangement arrangement) {
	return arrangement == OutputArrangement::Grouped ? "grouped" : "vector";
}

OutputArrangement parse_arrangement(std::string_view name) {
	if (name == "grouped") {
		return OutputArrangement::Grouped;
	}
	if (name == "vector" || name == "vector-based") {
		return OutputArrangement::VectorBased;
	}
	throw ConfigError("unknown output arrangement '" + std::string(name) + "'");
}

std::vector<double> default_quantiles() {
	return {0.05, 0.25, 0.5, 0.75, 0.95};
}

void validate_quantiles(const std::vector<double> &quantiles) {
	if (quantiles.empty()) {
		throw ConfigError("quantile list is empty");
	}
	for (std::size_t i = 0; i < quantiles.size(); ++i) {
		if (!(quantiles[i] > 0.0 && quantiles[i] < 1.0)) {
			throw InvalidQuantile("quantile level " + std::to_string(quantiles[i]) + " outside (0,1)");
		}
		if (i > 0 && !(quantiles[i] > quantiles[i - 1])) {
			throw ConfigError("quantile levels must be strictly increasing");
		}
	}
}

void ModelSpec::validate() const {
	if (features < 1) {
		throw ConfigError("features must be >= 1");
	}
	if (window < 2) {
		throw ConfigError("window must be >= 2");
	}
	if (horizons < 1) {
		throw ConfigError("horizons must be >= 1");
	}
	if (hidden1 < 1 || hidden2 < 1) {
		throw ConfigError("hidden sizes must be >= 1");
	}
	if (family == Family::ConvLstm && (conv_filters < 1 || conv_kernel < 1 || conv_kernel > window)) {
		throw ConfigError("convlstm needs filters >= 1 and 1 <= kernel <= window");
	}
	validate_quantiles(quantiles);
}

ModelSpec ModelSpec::reference(Family family, std::size_t features, std::size_t window, std::size_t horizons,
                               std::vector<double> quantiles) {
	ModelSpec spec;
	spec.family = family;
	spec.features = features;
	spec.window = window;
	spec.horizons = horizons;
	spec.quantiles = std::move(quantiles);
	switch (family) {
	case Family::EdLstm:
		spec.hidden1 = spec.hidden2 = 100;
		break;
	case Family::ConvLstm:
		spec.hidden1 = spec.hidden2 = 20;
		break;
	default:
		spec.hidden1 = spec.hidden2 = 50;
		break;
	}
	spec.validate();
	return spec;
}

namespace {

void add_lstm_shapes(std::vector<std::pair<std::string, Shape>> &out, const std::string &prefix, std::size_t in,
                     std::size_t hidden) {
	out.emplace_back(prefix + ".w_x", Shape{in, 4 * hidden});
	out.emplace_back(prefix + ".w_h", Shape{hidden, 4 * hidden});
	out.emplace_back(prefix + ".bias", Shape{4 * hidden});
}

bool is_bias(const std::string &name) {
	return name.ends_with(".bias");
}

} // namespace

std::vector<std::pair<std::string, Shape>> parameter_shapes(const ModelSpec &spec) {
	spec.validate();
	const std::size_t k = spec.quantile_count();
	const std::size_t out = spec.horizons * k;
	std::vector<std::pair<std::string, Shape>> shapes;
	switch (spec.family) {
	case Family::Lstm:
		add_lstm_shapes(shapes, "lstm1", spec.features, spec.hidden1);
		add_lstm_shapes(shapes, "lstm2", spec.hidden1, spec.hidden2);
		shapes.emplace_back("head.weight", Shape{spec.hidden2, out});
		shapes.emplace_back("head.bias", Shape{out});
		break;
	case Family::BdLstm:
		add_lstm_shapes(shapes, "forward", spec.features, spec.hidden1);
		add_lstm_shapes(shapes, "backward", spec.features, spec.hidden1);
		add_lstm_shapes(shapes, "lstm2", 2 * spec.hidden1, spec.hidden2);
		shapes.emplace_back("head.weight", Shape{spec.hidden2, out});
		shapes.emplace_back("head.bias", Shape{out});
		break;
	case Family::EdLstm:
		add_lstm_shapes(shapes, "encoder", spec.features, spec.hidden1);
		add_lstm_shapes(shapes, "decoder", spec.hidden1, spec.hidden2);
		shapes.emplace_back("head.weight", Shape{spec.hidden2, k});
		shapes.emplace_back("head.bias", Shape{k});
		break;
	case Family::ConvLstm:
		if (spec.features == 1) {
			shapes.emplace_back("conv.kernel", Shape{spec.conv_kernel, 1, spec.conv_filters});
		} else {
			shapes.emplace_back("conv.kernel", Shape{spec.conv_kernel, spec.features, 1, spec.conv_filters});
		}
		shapes.emplace_back("conv.bias", Shape{spec.conv_filters});
		add_lstm_shapes(shapes, "lstm1", spec.conv_filters, spec.hidden1);
		shapes.emplace_back("head.weight", Shape{spec.hidden1, out});
		shapes.emplace_back("head.bias", Shape{out});
		break;
	case Family::Linear:
		shapes.emplace_back("head.weight", Shape{spec.window * spec.features, out});
		shapes.emplace_back("head.bias", Shape{out});
		break;
	}
	return shapes;
}

LstmState lstm_cell_step(Graph &graph, const LstmNodes &layer, NodeId x, const LstmState &prev) {
	const NodeId z = graph.add(graph.add(graph.matmul(x, layer.w_x), graph.matmul(prev.h, layer.w_h)), layer.bias);
	const std::size_t h = layer.hidden;
	const NodeId in_gate = graph.sigmoid(graph.slice(z, 1, 0, h));
	const NodeId forget_gate = graph.sigmoid(graph.slice(z, 1, h, 2 * h));
	const NodeId candidate = graph.tanh(graph.slice(z, 1, 2 * h, 3 * h));
	const NodeId out_gate = graph.sigmoid(graph.slice(z, 1, 3 * h, 4 * h));
	const NodeId c = graph.add(graph.hadamard(forget_gate, prev.c), graph.hadamard(in_gate, candidate));
	const NodeId hidden = graph.hadamard(out_gate, graph.tanh(c));
	return {hidden, c};
}

std::vector<NodeId> run_lstm(Graph &graph, const LstmNodes &layer, const std::vector<NodeId> &steps,
                             LstmState *final_state) {
	const std::size_t h = layer.hidden;
	std::map<NodeId, NodeId> projected;
	std::vector<NodeId> outputs;
	outputs.reserve(steps.size());
	bool first = true;
	LstmState state{};
	for (NodeId x : steps) {
		auto it = projected.find(x);
		if (it == projected.end()) {
			it = projected.emplace(x, graph.add(graph.matmul(x, layer.w_x), layer.bias)).first;
		}
		NodeId z = it->second;
		if (!first) {
			z = graph.add(z, graph.matmul(state.h, layer.w_h));
		}
		const NodeId in_gate = graph.sigmoid(graph.slice(z, 1, 0, h));
		const NodeId forget_gate = graph.sigmoid(graph.slice(z, 1, h, 2 * h));
		const NodeId candidate = graph.tanh(graph.slice(z, 1, 2 * h, 3 * h));
		const NodeId out_gate = graph.sigmoid(graph.slice(z, 1, 3 * h, 4 * h));
		// A zero initial state drops the recurrent product and the f * c_prev term.
		NodeId c = graph.hadamard(in_gate, candidate);
		if (!first) {
			c = graph.add(graph.hadamard(forget_gate, state.c), c);
		}
		state = {graph.hadamard(out_gate, graph.tanh(c)), c};
		outputs.push_back(state.h);
		first = false;
	}
	if (final_state != nullptr) {
		*final_state = state;
	}
	return outputs;
}

Model::Model(ModelSpec spec, ParameterSet params) : spec_(std::move(spec)), params_(std::move(params)) {
	const auto shapes = parameter_shapes(spec_);
	if (shapes.size() != params_.size()) {
		throw ConfigError("parameter count mismatch for " + std::string(family_name(spec_.family)));
	}
	for (ParamId id = 0; id < shapes.size(); ++id) {
		if (params_.name(id) != shapes[id].first || params_.value(id).shape() != shapes[id].second) {
			throw ShapeError("parameter '" + params_.name(id) + "' " + shape_to_string(params_.value(id).shape()) +
			                 " expected '" + shapes[id].first + "' " + shape_to_string(shapes[id].second));
		}
	}
}

Model Model::build(const ModelSpec &spec, Rng &rng) {
	ParameterSet params;
	for (auto &[name, shape] : parameter_shapes(spec)) {
		if (is_bias(name)) {
			params.add(name, Tensor::zeros(shape));
		} else {
			params.add(name, Tensor::glorot_uniform(shape, rng));
		}
	}
	return Model(spec, std::move(params));
}

Model build_model(const ModelSpec &spec, Rng &rng) {
	return Model::build(spec, rng);
}

NodeId Model::param(std::span<const NodeId> params, const std::string &name) const {
	auto id = params_.find(name);
	if (!id || *id >= params.size()) {
		throw ConfigError("parameter '" + name + "' not bound");
	}
	return params[*id];
}

LstmNodes Model::layer(std::span<const NodeId> params, const std::string &prefix, std::size_t hidden) const {
	return {param(params, prefix + ".w_x"), param(params, prefix + ".w_h"), param(params, prefix + ".bias"), hidden};
}

namespace {

std::vector<NodeId> split_steps(Graph &graph, NodeId sequence) {
	const std::size_t steps = graph.value(sequence).dim(1);
	std::vector<NodeId> out;
	out.reserve(steps);
	for (std::size_t t = 0; t < steps; ++t) {
		out.push_back(graph.select(sequence, 1, t));
	}
	return out;
}

NodeId dense(Graph &graph, NodeId x, NodeId weight, NodeId bias) {
	return graph.add(graph.matmul(x, weight), bias);
}

} // namespace

NodeId Model::forward_body(Graph &graph, std::span<const NodeId> params, NodeId input, NodeId *bidirectional) const {
	const auto &in_shape = graph.value(input).shape();
	if (in_shape.size() != 3 || in_shape[1] != spec_.window || in_shape[2] != spec_.features) {
		throw ShapeError("model input " + shape_to_string(in_shape) + " expected [B," + std::to_string(spec_.window) +
		                 "," + std::to_string(spec_.features) + "]");
	}
	const std::size_t batch = in_shape[0];
	const std::size_t k = spec_.quantile_count();
	const std::size_t m = spec_.horizons;

	switch (spec_.family) {
	case Family::Lstm: {
		graph.set_scope("lstm1");
		const auto first = run_lstm(graph, layer(params, "lstm1", spec_.hidden1), split_steps(graph, input));
		graph.set_scope("lstm2");
		LstmState last{};
		run_lstm(graph, layer(params, "lstm2", spec_.hidden2), first, &last);
		graph.set_scope("head");
		return dense(graph, last.h, param(params, "head.weight"), param(params, "head.bias"));
	}
	case Family::BdLstm: {
		graph.set_scope("forward");
		const auto fwd = run_lstm(graph, layer(params, "forward", spec_.hidden1), split_steps(graph, input));
		graph.set_scope("backward");
		const NodeId reversed = graph.reverse_time(input, 1);
		auto bwd = run_lstm(graph, layer(params, "backward", spec_.hidden1), split_steps(graph, reversed));
		std::reverse(bwd.begin(), bwd.end());
		std::vector<NodeId> merged;
		merged.reserve(fwd.size());
		for (std::size_t t = 0; t < fwd.size(); ++t) {
			const NodeId pair[2] = {fwd[t], bwd[t]};
			merged.push_back(graph.concat(pair, 1));
		}
		if (bidirectional != nullptr) {
			std::vector<NodeId> rows;
			for (NodeId step : merged) {
				rows.push_back(graph.reshape(step, {batch, 1, 2 * spec_.hidden1}));
			}
			*bidirectional = graph.concat(rows, 1);
		}
		graph.set_scope("lstm2");
		LstmState last{};
		run_lstm(graph, layer(params, "lstm2", spec_.hidden2), merged, &last);
		graph.set_scope("head");
		return dense(graph, last.h, param(params, "head.weight"), param(params, "head.bias"));
	}
	case Family::EdLstm: {
		graph.set_scope("encoder");
		LstmState encoded{};
		run_lstm(graph, layer(params, "encoder", spec_.hidden1), split_steps(graph, input), &encoded);
		graph.set_scope("decoder");
		const std::vector<NodeId> repeated(m, encoded.h);
		const auto decoded = run_lstm(graph, layer(params, "decoder", spec_.hidden2), repeated);
		graph.set_scope("head");
		const NodeId weight = param(params, "head.weight");
		const NodeId bias = param(params, "head.bias");
		std::vector<NodeId> per_step;
		per_step.reserve(m);
		for (NodeId h : decoded) {
			per_step.push_back(graph.reshape(dense(graph, h, weight, bias), {batch, 1, k}));
		}
		return graph.concat(per_step, 1);
	}
	case Family::ConvLstm: {
		graph.set_scope("conv");
		NodeId features;
		if (spec_.features == 1) {
			features = graph.conv1d(input, param(params, "conv.kernel"));
		} else {
			const NodeId image = graph.reshape(input, {batch, spec_.window, spec_.features, 1});
			const NodeId conv = graph.conv2d(image, param(params, "conv.kernel"));
			features = graph.reshape(conv, {batch, spec_.window - spec_.conv_kernel + 1, spec_.conv_filters});
		}
		features = graph.relu(graph.add(features, param(params, "conv.bias")));
		graph.set_scope("lstm1");
		LstmState last{};
		run_lstm(graph, layer(params, "lstm1", spec_.hidden1), split_steps(graph, features), &last);
		graph.set_scope("head");
		return dense(graph, last.h, param(params, "head.weight"), param(params, "head.bias"));
	}
	case Family::Linear: {
		graph.set_scope("head");
		const NodeId flat = graph.reshape(input, {batch, spec_.window * spec_.features});
		return dense(graph, flat, param(params, "head.weight"), param(params, "head.bias"));
	}
	}
	throw ConfigError("unknown model family");
}

NodeId Model::forward(Graph &graph, std::span<const NodeId> params, NodeId input) const {
	const NodeId body = forward_body(graph, params, input);
	graph.set_scope("output");
	const std::size_t batch = graph.value(input).dim(0);
	const std::size_t m = spec_.horizons;
	const std::size_t k = spec_.quantile_count();
	const auto &shape = graph.value(body).shape();
	if (spec_.arrangement == OutputArrangement::Grouped) {
		return shape.size() == 2 ? body : graph.reshape(body, {batch, m * k});
	}
	return shape.size() == 3 ? body : graph.reshape(body, {batch, m, k});
}

Tensor Model::bidirectional_features(const Tensor &windows) const {
	if (spec_.family != Family::BdLstm) {
		throw ConfigError("bidirectional features need a bdlstm model");
	}
	Graph graph;
	const auto nodes = params_.bind(graph);
	NodeId features = 0;
	forward_body(graph, nodes, graph.constant(windows), &features);
	return graph.value(features);
}

Tensor forward_pass(const Model &model, const Tensor &windows, const PredictOptions &options) {
	Graph graph;
	const auto nodes = model.parameters().bind(graph);
	const NodeId out = model.forward(graph, nodes, graph.constant(windows));
	const auto &spec = model.spec();
	Tensor result = graph.value(out).reshaped({windows.dim(0), spec.horizons, spec.quantile_count()});
	if (options.clip_nonnegative) {
		for (auto &v : result.data()) {
			v = std::max(v, 0.0);
		}
	}
	return result;
}

} // namespace qdl
