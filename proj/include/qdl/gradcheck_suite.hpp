#pragma once

#include "qdl/gradcheck.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace qdl {

struct GradSuiteEntry {
	std::string name;
	std::size_t trials = 0;
	std::size_t checked = 0;
	std::size_t kinks_excluded = 0;
	double max_rel_error = 0.0;
	bool passed = true;
};

struct GradSuiteOptions {
	std::uint64_t seed = 0;
	// Random trials per op kind; inputs drawn from U(-10, 10).
	std::size_t op_trials = 100;
	double h = 1e-5;
	double tol = 1e-4;
};

// Every differentiable op kind on random small shapes, then every model
// family with h1 = h2 = 3, d = 4, m = 2, f in {1, 3}, both output
// arrangements, under the quantile loss.
std::vector<GradSuiteEntry> gradcheck_suite(const GradSuiteOptions &options = {});

} // namespace qdl
