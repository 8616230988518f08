#include "qdl/gradcheck_suite.hpp"

#include "qdl/models.hpp"
#include "qdl/quantile_loss.hpp"
#include "qdl/rng.hpp"

#include <functional>
#include <memory>
#include <optional>

namespace qdl {

namespace {

Tensor uniform(Shape shape, Rng &rng, double bound) {
	std::vector<double> data(shape_size(shape));
	for (auto &v : data) {
		v = rng.uniform(-bound, bound);
	}
	return Tensor(std::move(shape), std::move(data));
}

std::size_t dim(Rng &rng) {
	return 1 + rng.below(4);
}

// One trial: random inputs as parameters, and an op applied to them.
struct Trial {
	ParameterSet inputs;
	std::function<NodeId(Graph &, std::span<const NodeId>)> op;
};

using TrialFactory = std::function<Trial(Rng &)>;

// Weights the op output with fixed random coefficients so every output
// element carries a distinct upstream gradient.
LossBuilder weighted_sum(std::function<NodeId(Graph &, std::span<const NodeId>)> op, Rng &rng) {
	auto weights = std::make_shared<std::optional<Tensor>>();
	const std::uint64_t seed = rng.next_u64();
	return [op, weights, seed](Graph &g, std::span<const NodeId> p) {
		const NodeId out = op(g, p);
		if (!*weights) {
			Rng local(seed);
			*weights = uniform(g.value(out).shape(), local, 1.0);
		}
		return g.reduce_sum(g.hadamard(out, g.constant(**weights)));
	};
}

Trial unary(Rng &rng, Shape shape, std::function<NodeId(Graph &, NodeId)> f) {
	Trial t;
	t.inputs.add("x", uniform(std::move(shape), rng, 10.0));
	t.op = [f](Graph &g, std::span<const NodeId> p) { return f(g, p[0]); };
	return t;
}

Trial binary(Rng &rng, Shape a, Shape b, std::function<NodeId(Graph &, NodeId, NodeId)> f) {
	Trial t;
	t.inputs.add("a", uniform(std::move(a), rng, 10.0));
	t.inputs.add("b", uniform(std::move(b), rng, 10.0));
	t.op = [f](Graph &g, std::span<const NodeId> p) { return f(g, p[0], p[1]); };
	return t;
}

Shape random_shape(Rng &rng, std::size_t rank) {
	Shape s;
	for (std::size_t i = 0; i < rank; ++i) {
		s.push_back(dim(rng));
	}
	return s;
}

std::vector<std::pair<std::string, TrialFactory>> op_factories() {
	std::vector<std::pair<std::string, TrialFactory>> f;
	f.emplace_back("matmul", [](Rng &r) {
		const std::size_t m = dim(r), k = dim(r), n = dim(r);
		return binary(r, {m, k}, {k, n}, [](Graph &g, NodeId a, NodeId b) { return g.matmul(a, b); });
	});
	f.emplace_back("add", [](Rng &r) {
		auto a = random_shape(r, 1 + r.below(3));
		// Broadcast a random suffix of a's shape.
		Shape b(a.begin() + static_cast<std::ptrdiff_t>(r.below(a.size())), a.end());
		return binary(r, a, b, [](Graph &g, NodeId x, NodeId y) { return g.add(x, y); });
	});
	f.emplace_back("sub", [](Rng &r) {
		auto a = random_shape(r, 1 + r.below(3));
		Shape b(a.begin() + static_cast<std::ptrdiff_t>(r.below(a.size())), a.end());
		return binary(r, a, b, [](Graph &g, NodeId x, NodeId y) { return g.sub(x, y); });
	});
	f.emplace_back("hadamard", [](Rng &r) {
		auto a = random_shape(r, 1 + r.below(3));
		return binary(r, a, a, [](Graph &g, NodeId x, NodeId y) { return g.hadamard(x, y); });
	});
	f.emplace_back("scalar_mul", [](Rng &r) {
		const double c = r.uniform(-3.0, 3.0);
		return unary(r, random_shape(r, 2), [c](Graph &g, NodeId x) { return g.scalar_mul(x, c); });
	});
	f.emplace_back("concat", [](Rng &r) {
		const std::size_t rank = 1 + r.below(3), axis = r.below(rank);
		auto a = random_shape(r, rank), b = a;
		b[axis] = dim(r);
		return binary(r, a, b, [axis](Graph &g, NodeId x, NodeId y) {
			const NodeId parts[] = {x, y};
			return g.concat(parts, axis);
		});
	});
	f.emplace_back("slice", [](Rng &r) {
		const std::size_t rank = 1 + r.below(3), axis = r.below(rank);
		auto s = random_shape(r, rank);
		s[axis] += 1;
		const std::size_t begin = r.below(s[axis]);
		const std::size_t end = begin + 1 + r.below(s[axis] - begin);
		return unary(r, s, [=](Graph &g, NodeId x) { return g.slice(x, axis, begin, end); });
	});
	f.emplace_back("reshape", [](Rng &r) {
		const std::size_t a = dim(r), b = dim(r), c = dim(r);
		return unary(r, {a, b, c}, [=](Graph &g, NodeId x) { return g.reshape(x, {a * b, c}); });
	});
	f.emplace_back("transpose", [](Rng &r) {
		return unary(r, random_shape(r, 2), [](Graph &g, NodeId x) { return g.transpose(x); });
	});
	f.emplace_back("sigmoid", [](Rng &r) {
		return unary(r, random_shape(r, 2), [](Graph &g, NodeId x) { return g.sigmoid(x); });
	});
	f.emplace_back("tanh", [](Rng &r) {
		return unary(r, random_shape(r, 2), [](Graph &g, NodeId x) { return g.tanh(x); });
	});
	f.emplace_back("relu", [](Rng &r) {
		return unary(r, random_shape(r, 2), [](Graph &g, NodeId x) { return g.relu(x); });
	});
	f.emplace_back("conv1d", [](Rng &r) {
		const std::size_t b = dim(r), c = dim(r), k = 1 + r.below(2), len = k + r.below(4), filters = dim(r);
		return binary(r, {b, len, c}, {k, c, filters}, [](Graph &g, NodeId x, NodeId w) { return g.conv1d(x, w); });
	});
	f.emplace_back("conv2d", [](Rng &r) {
		const std::size_t b = dim(r), c = 1 + r.below(2), kh = 1 + r.below(2), kw = 1 + r.below(3);
		const std::size_t h = kh + r.below(3), w = kw + r.below(2), filters = dim(r);
		return binary(r, {b, h, w, c}, {kh, kw, c, filters},
		              [](Graph &g, NodeId x, NodeId k) { return g.conv2d(x, k); });
	});
	f.emplace_back("reduce_mean", [](Rng &r) {
		return unary(r, random_shape(r, 1 + r.below(3)), [](Graph &g, NodeId x) { return g.reduce_mean(x); });
	});
	f.emplace_back("reduce_sum", [](Rng &r) {
		return unary(r, random_shape(r, 1 + r.below(3)), [](Graph &g, NodeId x) { return g.reduce_sum(x); });
	});
	f.emplace_back("reverse_time", [](Rng &r) {
		return unary(r, random_shape(r, 3), [](Graph &g, NodeId x) { return g.reverse_time(x, 1); });
	});
	f.emplace_back("pinball", [](Rng &r) {
		auto levels = default_quantiles();
		Shape s = random_shape(r, 2);
		s.push_back(levels.size());
		return unary(r, s, [levels](Graph &g, NodeId x) { return g.pinball(x, levels); });
	});
	return f;
}

void fold(GradSuiteEntry &entry, const GradCheckReport &report) {
	++entry.trials;
	for (const auto &b : report.blocks) {
		entry.checked += b.checked;
		entry.kinks_excluded += b.kinks_excluded;
	}
	entry.max_rel_error = std::max(entry.max_rel_error, report.max_rel_error());
	entry.passed = entry.passed && report.passed();
}

} // namespace

std::vector<GradSuiteEntry> gradcheck_suite(const GradSuiteOptions &options) {
	Rng rng(options.seed);
	std::vector<GradSuiteEntry> out;
	for (const auto &[name, factory] : op_factories()) {
		GradSuiteEntry entry;
		entry.name = "op " + name;
		for (std::size_t t = 0; t < options.op_trials; ++t) {
			Trial trial = factory(rng);
			fold(entry, grad_check(weighted_sum(trial.op, rng), trial.inputs, options.h, options.tol));
		}
		out.push_back(std::move(entry));
	}

	const QuantileSet quantiles;
	for (Family family : {Family::Lstm, Family::BdLstm, Family::EdLstm, Family::ConvLstm, Family::Linear}) {
		for (std::size_t features : {1u, 3u}) {
			for (auto arrangement : {OutputArrangement::VectorBased, OutputArrangement::Grouped}) {
				ModelSpec spec;
				spec.family = family;
				spec.features = features;
				spec.window = 4;
				spec.horizons = 2;
				spec.hidden1 = spec.hidden2 = 3;
				spec.quantiles = quantiles.levels();
				spec.arrangement = arrangement;
				Model model = Model::build(spec, rng);
				// Glorot weights on toy layers are small; spread biases too so
				// every gate leaves its linear regime.
				for (ParamId id = 0; id < model.parameters().size(); ++id) {
					for (auto &v : model.parameters().value(id).data()) {
						v += rng.uniform(-0.5, 0.5);
					}
				}
				const std::size_t batch = 2;
				const Tensor input = uniform({batch, spec.window, features}, rng, 1.0);
				const Tensor targets = uniform({batch, spec.horizons}, rng, 1.0);
				LossBuilder loss = [&](Graph &g, std::span<const NodeId> p) {
					return quantile_loss_node(g, model.forward(g, p, g.constant(input)), targets, quantiles);
				};
				GradSuiteEntry entry;
				entry.name = "model " + std::string(family_name(family)) + " f=" + std::to_string(features) + " " +
				             std::string(arrangement_name(arrangement));
				fold(entry, grad_check(loss, model.parameters(), options.h, options.tol));
				out.push_back(std::move(entry));
			}
		}
	}
	return out;
}

} // namespace qdl
