#include "qdl/trainer.hpp"

#include "qdl/checkpoint.hpp"

#include <cmath>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace qdl {

void tune_allocator() {
#ifdef __GLIBC__
	mallopt(M_MMAP_THRESHOLD, 64 << 20);
	mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

AdamState AdamState::for_parameters(const ParameterSet &params, const AdamConfig &config) {
	AdamState state;
	state.config = config;
	for (ParamId id = 0; id < params.size(); ++id) {
		state.first_moment.push_back(Tensor::zeros(params.value(id).shape()));
		state.second_moment.push_back(Tensor::zeros(params.value(id).shape()));
	}
	return state;
}

void adam_step(ParameterSet &params, const Gradients &grads, AdamState &state) {
	if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
		throw ShapeError("adam state tracks " + std::to_string(state.first_moment.size()) + " tensors, model has " +
		                 std::to_string(params.size()));
	}
	for (ParamId id = 0; id < params.size(); ++id) {
		const Tensor &g = grads[id];
		if (g.shape() != params.value(id).shape() || state.first_moment[id].shape() != g.shape()) {
			throw ShapeError("gradient for '" + params.name(id) + "' has shape " + shape_to_string(g.shape()));
		}
		if (!g.all_finite()) {
			throw NumericalError("non-finite gradient for parameter '" + params.name(id) + "'");
		}
	}
	const auto &c = state.config;
	++state.step;
	const double t = static_cast<double>(state.step);
	const double correction1 = 1.0 - std::pow(c.beta1, t);
	const double correction2 = 1.0 - std::pow(c.beta2, t);
	for (ParamId id = 0; id < params.size(); ++id) {
		const double *g = grads[id].data().data();
		double *theta = params.value(id).data().data();
		double *m = state.first_moment[id].data().data();
		double *v = state.second_moment[id].data().data();
		const std::size_t size = params.value(id).size();
		for (std::size_t i = 0; i < size; ++i) {
			m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
			v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
			const double m_hat = m[i] / correction1;
			const double v_hat = v[i] / correction2;
			theta[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
		}
	}
}

std::string_view loss_kind_name(LossKind kind) {
	return kind == LossKind::Quantile ? "quantile" : "mse";
}

LossKind parse_loss_kind(std::string_view name) {
	if (name == "quantile") {
		return LossKind::Quantile;
	}
	if (name == "mse") {
		return LossKind::Mse;
	}
	throw ConfigError("unknown loss kind '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
	if (epochs < 1) {
		throw ConfigError("epochs must be >= 1");
	}
	if (batch_size < 1) {
		throw ConfigError("batch size must be >= 1");
	}
	if (clip_norm && !(*clip_norm > 0.0)) {
		throw ConfigError("gradient clip norm must be positive");
	}
	if (!(adam.learning_rate > 0.0)) {
		throw ConfigError("learning rate must be positive");
	}
	if (checkpoint_every > 0 && checkpoint_path.empty()) {
		throw ConfigError("checkpoint cadence set without a checkpoint path");
	}
}

namespace {

void check_loss_kind(const Model &model, LossKind kind) {
	if (kind == LossKind::Mse && model.spec().quantile_count() != 1) {
		throw ConfigError("mse loss needs a single-output model, got " +
		                  std::to_string(model.spec().quantile_count()) + " quantile levels");
	}
}

NodeId loss_node(Graph &graph, NodeId predictions, const Tensor &targets, const Model &model, LossKind kind) {
	if (kind == LossKind::Mse) {
		return mse_loss_node(graph, predictions, targets);
	}
	return quantile_loss_node(graph, predictions, targets, QuantileSet(model.spec().quantiles));
}

} // namespace

TrainerState start_training(Model model, const TrainConfig &config) {
	config.validate();
	AdamState adam = AdamState::for_parameters(model.parameters(), config.adam);
	return TrainerState{std::move(model), std::move(adam), Rng(config.shuffle_seed).state(), 0, {}};
}

void continue_training(TrainerState &state, const WindowedDataset &dataset, const TrainConfig &config) {
	config.validate();
	check_loss_kind(state.model, config.loss);
	if (!dataset.finalized() || dataset.train_indices.empty()) {
		throw ConfigError("training needs a normalized dataset with a non-empty training split");
	}
	std::vector<std::size_t> order = dataset.train_indices;
	const double n = static_cast<double>(order.size());

	while (state.epoch < config.epochs) {
		auto last_good = std::make_shared<const TrainerState>(state);
		order = dataset.train_indices;
		Rng rng = Rng::from_state(state.shuffle_state);
		rng.shuffle(std::span<std::size_t>(order));
		state.shuffle_state = rng.state();

		double epoch_sum = 0.0;
		try {
			for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
				const std::size_t end = std::min(order.size(), begin + config.batch_size);
				const auto [x, y] = dataset.batch(std::span<const std::size_t>(order).subspan(begin, end - begin));

				Graph graph;
				const auto nodes = state.model.parameters().bind(graph);
				const NodeId pred = state.model.forward(graph, nodes, graph.constant(x));
				const NodeId loss = loss_node(graph, pred, y, state.model, config.loss);
				const double value = graph.value(loss).item();
				Gradients grads = graph.backward(loss);
				if (config.clip_norm) {
					const double norm = grads.global_norm();
					if (norm > *config.clip_norm) {
						const double scale = *config.clip_norm / norm;
						for (ParamId id = 0; id < state.model.parameters().size(); ++id) {
							for (auto &g : grads[id].data()) {
								g *= scale;
							}
						}
					}
				}
				adam_step(state.model.parameters(), grads, state.adam);
				epoch_sum += value * static_cast<double>(end - begin);
			}
		} catch (const NumericalError &e) {
			throw TrainingDiverged("epoch " + std::to_string(state.epoch + 1) + ": " + e.what(), last_good);
		}
		const double epoch_loss = epoch_sum / n;
		if (!std::isfinite(epoch_loss)) {
			throw TrainingDiverged("epoch " + std::to_string(state.epoch + 1) + " loss is not finite", last_good);
		}
		state.loss_trace.push_back(epoch_loss);
		++state.epoch;
		if (config.checkpoint_every > 0 && state.epoch % config.checkpoint_every == 0) {
			save_trainer_state(config.checkpoint_path, state);
		}
	}
}

TrainResult train(Model model, const WindowedDataset &dataset, const TrainConfig &config) {
	check_loss_kind(model, config.loss);
	TrainerState state = start_training(std::move(model), config);
	continue_training(state, dataset, config);
	return TrainResult{std::move(state.model), std::move(state.loss_trace)};
}

LossValue loss_eval(const Model &model, const WindowedDataset &dataset, LossKind kind, Split split,
                    std::size_t batch_size) {
	check_loss_kind(model, kind);
	const auto ids = dataset.indices(split);
	if (ids.empty()) {
		throw EmptyEval("split has no windows");
	}
	const std::size_t m = model.spec().horizons;
	const std::size_t k = model.spec().quantile_count();
	const QuantileSet quantiles(model.spec().quantiles);
	std::vector<double> sums(m * k, 0.0);
	for (std::size_t begin = 0; begin < ids.size(); begin += batch_size) {
		const std::size_t end = std::min(ids.size(), begin + batch_size);
		const auto [x, y] = dataset.batch(std::span<const std::size_t>(ids).subspan(begin, end - begin));
		const Tensor pred = forward_pass(model, x);
		const double weight = static_cast<double>(end - begin);
		if (kind == LossKind::Quantile) {
			const LossValue part = quantile_loss_batch(y, pred, quantiles);
			for (std::size_t c = 0; c < sums.size(); ++c) {
				sums[c] += part.breakdown[c] * weight;
			}
		} else {
			for (std::size_t b = 0; b < end - begin; ++b) {
				for (std::size_t h = 0; h < m; ++h) {
					const double r = y[b * m + h] - pred[b * m + h];
					sums[h] += r * r;
				}
			}
		}
	}
	double total = 0.0;
	for (auto &s : sums) {
		s /= static_cast<double>(ids.size());
		total += s;
	}
	return {total / static_cast<double>(sums.size()), Tensor({m, k}, std::move(sums))};
}

Tensor predict_split(const Model &model, const WindowedDataset &dataset, Split split, const PredictOptions &options,
                     std::size_t batch_size) {
	const auto ids = dataset.indices(split);
	if (ids.empty()) {
		throw EmptyEval("split has no windows");
	}
	const std::size_t m = model.spec().horizons;
	const std::size_t k = model.spec().quantile_count();
	std::vector<double> out;
	out.reserve(ids.size() * m * k);
	for (std::size_t begin = 0; begin < ids.size(); begin += batch_size) {
		const std::size_t end = std::min(ids.size(), begin + batch_size);
		const auto [x, y] = dataset.batch(std::span<const std::size_t>(ids).subspan(begin, end - begin));
		const Tensor pred = forward_pass(model, x, options);
		out.insert(out.end(), pred.data().begin(), pred.data().end());
	}
	return Tensor({ids.size(), m, k}, std::move(out));
}

} // namespace qdl
