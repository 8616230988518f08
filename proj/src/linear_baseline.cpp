#include "qdl/linear_baseline.hpp"

#include "qdl/error.hpp"
#include "qdl/trainer.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <iostream>
#include <limits>

namespace qdl {

namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Matrix to_matrix(const Tensor &t, std::size_t rows, std::size_t cols) {
	Matrix out(rows, cols);
	std::copy(t.data().begin(), t.data().end(), out.data());
	return out;
}

// Flattened training windows [n, d*f] and targets [n, m].
std::pair<Tensor, Tensor> training_design(const WindowedDataset &dataset) {
	auto ids = dataset.finalized() ? dataset.indices(Split::Train) : dataset.indices(Split::All);
	if (ids.empty()) {
		throw InsufficientData("no training windows");
	}
	auto [x, y] = dataset.batch(ids);
	const std::size_t n = ids.size();
	return {x.reshaped({n, dataset.window * dataset.features()}), std::move(y)};
}

} // namespace

Model LinearModel::to_model() const {
	ModelSpec spec;
	spec.family = Family::Linear;
	spec.window = window;
	spec.features = features;
	spec.horizons = horizons;
	spec.quantiles = quantiles;
	spec.arrangement = OutputArrangement::Grouped;
	const std::size_t k = quantiles.size();
	ParameterSet params;
	params.add("head.weight", coefficients.reshaped({window * features, horizons * k}));
	params.add("head.bias", intercepts.reshaped({horizons * k}));
	return Model(spec, std::move(params));
}

LinearModel LinearModel::from_model(const Model &model) {
	const auto &spec = model.spec();
	if (spec.family != Family::Linear) {
		throw ConfigError("expected a linear model, got " + std::string(family_name(spec.family)));
	}
	LinearModel out;
	out.window = spec.window;
	out.features = spec.features;
	out.horizons = spec.horizons;
	out.quantiles = spec.quantiles;
	const std::size_t k = spec.quantile_count();
	out.coefficients = model.parameters().value("head.weight").reshaped({spec.window * spec.features, spec.horizons, k});
	out.intercepts = model.parameters().value("head.bias").reshaped({spec.horizons, k});
	return out;
}

OlsSolution solve_ols(const Tensor &inputs, const Tensor &targets, const OlsOptions &options) {
	if (inputs.rank() != 2 || targets.rank() != 2 || inputs.dim(0) != targets.dim(0)) {
		throw ShapeError("ols: inputs " + shape_to_string(inputs.shape()) + ", targets " +
		                 shape_to_string(targets.shape()));
	}
	const std::size_t n = inputs.dim(0), p = inputs.dim(1), m = targets.dim(1);
	Matrix design(n, p + 1);
	design.leftCols(p) = to_matrix(inputs, n, p);
	design.col(p).setOnes();
	const Matrix y = to_matrix(targets, n, m);

	OlsSolution out;
	Matrix beta;
	Eigen::ColPivHouseholderQR<Matrix> qr(design);
	if (qr.rank() == static_cast<Eigen::Index>(p + 1)) {
		beta = qr.solve(y);
	} else {
		if (!options.ridge_fallback) {
			throw SingularSystem("design matrix has rank " + std::to_string(qr.rank()) + " < " +
			                     std::to_string(p + 1));
		}
		std::cerr << "warning: rank-deficient design (rank " << qr.rank() << " of " << p + 1
		          << "), adding 1e-8 ridge\n";
		Matrix normal = design.transpose() * design;
		normal.diagonal().array() += 1e-8;
		Eigen::LDLT<Matrix> ldlt(normal);
		if (ldlt.info() != Eigen::Success) {
			throw SingularSystem("normal matrix factorization failed");
		}
		beta = ldlt.solve(design.transpose() * y);
		out.used_ridge = true;
	}
	if (!beta.allFinite()) {
		throw SingularSystem("non-finite least-squares solution");
	}
	out.coefficients = Tensor({p, m}, std::vector<double>(beta.data(), beta.data() + p * m));
	out.intercepts = Tensor({m}, std::vector<double>(beta.data() + p * m, beta.data() + (p + 1) * m));
	return out;
}

LinearModel fit_ols(const WindowedDataset &dataset, const OlsOptions &options) {
	auto [x, y] = training_design(dataset);
	auto sol = solve_ols(x, y, options);
	LinearModel model;
	model.window = dataset.window;
	model.features = dataset.features();
	model.horizons = dataset.horizon;
	model.quantiles = {0.5};
	model.coefficients = sol.coefficients.reshaped({x.dim(1), dataset.horizon, 1});
	model.intercepts = sol.intercepts.reshaped({dataset.horizon, 1});
	return model;
}

QuantileFit solve_quantile_linear(const std::optional<Tensor> &inputs, const Tensor &targets,
                                  const QuantileSet &quantiles, const QuantileFitOptions &options) {
	if (targets.rank() != 2) {
		throw ShapeError("quantile fit: targets must be [n, m], got " + shape_to_string(targets.shape()));
	}
	if (options.max_iterations == 0 || options.patience == 0 || !(options.learning_rate > 0.0)) {
		throw ConfigError("quantile fit: iterations, patience and learning rate must be positive");
	}
	const std::size_t n = targets.dim(0), m = targets.dim(1), k = quantiles.size();
	const std::size_t out_cols = m * k;
	if (inputs && (inputs->rank() != 2 || inputs->dim(0) != n)) {
		throw ShapeError("quantile fit: inputs " + shape_to_string(inputs->shape()));
	}

	ParameterSet params;
	const ParamId bias_id = params.add("bias", Tensor::zeros({out_cols}));
	std::optional<ParamId> weight_id;
	if (inputs) {
		weight_id = params.add("weight", Tensor::zeros({inputs->dim(1), out_cols}));
	}
	const Tensor zeros = Tensor::zeros({n, out_cols});
	const double scale = static_cast<double>(out_cols);

	QuantileFit fit;
	double best = std::numeric_limits<double>::infinity();
	ParameterSet best_params = params;
	double window_start = best;

	for (std::size_t t = 0; t < options.max_iterations; ++t) {
		Graph graph;
		const auto nodes = params.bind(graph);
		NodeId pred = inputs ? graph.matmul(graph.constant(*inputs), nodes[*weight_id]) : graph.constant(zeros);
		pred = graph.add(pred, nodes[bias_id]);
		pred = graph.reshape(pred, {n, m, k});
		const NodeId loss = graph.scalar_mul(quantile_loss_node(graph, pred, targets, quantiles), scale);
		const double value = graph.value(loss).item();
		if (!std::isfinite(value)) {
			throw TrainingDiverged("quantile fit: non-finite objective at iteration " + std::to_string(t), nullptr);
		}
		if (value < best) {
			best = value;
			best_params = params;
		}
		const Gradients grads = graph.backward(loss);
		const double step = options.learning_rate / (1.0 + static_cast<double>(t) / options.decay_iterations);
		for (std::size_t id = 0; id < params.size(); ++id) {
			auto dst = params.value(id).data();
			auto g = grads[id].data();
			for (std::size_t i = 0; i < dst.size(); ++i) {
				dst[i] -= step * g[i];
			}
		}
		fit.iterations = t + 1;
		if ((t + 1) % options.patience == 0) {
			fit.objective_trace.push_back(best);
			if (window_start - best < options.tolerance) {
				fit.converged = true;
				break;
			}
			window_start = best;
		}
	}
	if (fit.objective_trace.empty() || fit.objective_trace.back() != best) {
		fit.objective_trace.push_back(best);
	}
	fit.intercepts = best_params.value(bias_id);
	if (weight_id) {
		fit.coefficients = best_params.value(*weight_id);
	}
	return fit;
}

LinearModel fit_quantile_linear(const WindowedDataset &dataset, const QuantileSet &quantiles,
                                const QuantileFitOptions &options) {
	auto [x, y] = training_design(dataset);
	auto fit = solve_quantile_linear(x, y, quantiles, options);
	LinearModel model;
	model.window = dataset.window;
	model.features = dataset.features();
	model.horizons = dataset.horizon;
	model.quantiles = quantiles.levels();
	model.coefficients = fit.coefficients->reshaped({x.dim(1), dataset.horizon, quantiles.size()});
	model.intercepts = fit.intercepts.reshaped({dataset.horizon, quantiles.size()});
	return model;
}

Tensor predict(const LinearModel &model, const Tensor &windows) {
	const std::size_t p = model.window * model.features;
	const std::size_t k = model.quantiles.size();
	const std::size_t cols = model.horizons * k;
	if (windows.rank() != 3 || windows.dim(1) * windows.dim(2) != p) {
		throw ShapeError("linear predict: windows " + shape_to_string(windows.shape()) + " for d*f = " +
		                 std::to_string(p));
	}
	const std::size_t b = windows.dim(0);
	std::vector<double> out(b * cols);
	auto x = windows.data();
	auto w = model.coefficients.data();
	auto c = model.intercepts.data();
	for (std::size_t s = 0; s < b; ++s) {
		double *row = out.data() + s * cols;
		std::copy(c.begin(), c.end(), row);
		for (std::size_t j = 0; j < p; ++j) {
			const double xv = x[s * p + j];
			for (std::size_t o = 0; o < cols; ++o) {
				row[o] += xv * w[j * cols + o];
			}
		}
	}
	return Tensor({b, model.horizons, k}, std::move(out));
}

} // namespace qdl
