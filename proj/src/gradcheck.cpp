#include "qdl/gradcheck.hpp"

#include "qdl/error.hpp"

#include <algorithm>
#include <cmath>

namespace qdl {

bool GradCheckReport::passed() const {
	return std::all_of(blocks.begin(), blocks.end(), [](const auto &b) { return b.passed; });
}

double GradCheckReport::max_rel_error() const {
	double worst = 0.0;
	for (const auto &b : blocks) {
		worst = std::max(worst, b.max_rel_error);
	}
	return worst;
}

namespace {

double evaluate(const LossBuilder &build, const ParameterSet &params) {
	Graph graph;
	const auto nodes = params.bind(graph);
	return graph.value(build(graph, nodes)).item();
}

} // namespace

GradCheckReport grad_check(const LossBuilder &build, const ParameterSet &params, double h, double tol) {
	if (!(h > 0.0) || !(tol > 0.0)) {
		throw ConfigError("grad_check requires h > 0 and tol > 0");
	}
	Gradients analytic;
	double f0 = 0.0;
	{
		Graph graph;
		const auto nodes = params.bind(graph);
		const NodeId loss = build(graph, nodes);
		f0 = graph.value(loss).item();
		analytic = graph.backward(loss);
	}
	const double floor = 1e-6 * std::max(1.0, std::abs(f0));

	GradCheckReport report;
	ParameterSet probe = params;
	for (ParamId id = 0; id < params.size(); ++id) {
		GradCheckBlock block;
		block.name = params.name(id);
		Tensor &value = probe.value(id);
		for (std::size_t i = 0; i < value.size(); ++i) {
			const double original = value[i];
			value[i] = original + h;
			const double f_plus = evaluate(build, probe);
			value[i] = original - h;
			const double f_minus = evaluate(build, probe);
			value[i] = original;

			const double numeric = (f_plus - f_minus) / (2.0 * h);
			const double a = analytic[id][i];
			const double diff = std::abs(a - numeric);
			const double rel = diff / std::max({std::abs(a), std::abs(numeric), floor});
			if (rel >= tol) {
				const double right = (f_plus - f0) / h;
				const double left = (f0 - f_minus) / h;
				if (std::min(std::abs(a - right), std::abs(a - left)) < 0.25 * diff) {
					++block.kinks_excluded;
					continue;
				}
			}
			++block.checked;
			block.max_rel_error = std::max(block.max_rel_error, rel);
		}
		block.passed = block.max_rel_error < tol;
		report.blocks.push_back(std::move(block));
	}
	return report;
}

} // namespace qdl
