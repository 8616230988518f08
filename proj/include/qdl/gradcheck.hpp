#pragma once

#include "qdl/graph.hpp"
#include "qdl/parameters.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace qdl {

struct GradCheckBlock {
	std::string name;
	double max_rel_error = 0.0;
	std::size_t checked = 0;
	// Coordinates where the analytic gradient agrees with one one-sided
	// difference but not the central one: a relu or pinball kink lies
	// within h of the evaluation point.
	std::size_t kinks_excluded = 0;
	bool passed = true;
};

struct GradCheckReport {
	std::vector<GradCheckBlock> blocks;

	bool passed() const;
	double max_rel_error() const;
};

// Builds a scalar loss on a fresh graph from the bound parameter nodes.
using LossBuilder = std::function<NodeId(Graph &, std::span<const NodeId>)>;

// Central finite differences, step h, against reverse-mode gradients for
// every coordinate of every parameter block. Relative error is
// |a - n| / max(|a|, |n|, 1e-6 * max(1, |f|)). Failures are reported,
// never thrown.
GradCheckReport grad_check(const LossBuilder &build, const ParameterSet &params, double h = 1e-5,
                           double tol = 1e-4);

} // namespace qdl
