#pragma once

#include "qdl/datapipe.hpp"
#include "qdl/models.hpp"
#include "qdl/quantile_loss.hpp"

#include <optional>
#include <vector>

namespace qdl {

// Affine multi-output predictor on flattened windows:
//   yhat[h, k] = intercepts[h, k] + sum_j x[j] * coefficients[j, h, k]
// where x is the window flattened row-major (d x f).
struct LinearModel {
	std::size_t window = 0;
	std::size_t features = 0;
	std::size_t horizons = 0;
	std::vector<double> quantiles{0.5};
	// [(d*f), m, K]
	Tensor coefficients;
	// [m, K]
	Tensor intercepts;

	// Same layout as a Model of family linear ("head.weight", "head.bias"),
	// so both share the checkpoint container and the evaluation path.
	Model to_model() const;
	static LinearModel from_model(const Model &model);
};

struct OlsOptions {
	// Add 1e-8 to the normal-matrix diagonal when the design is rank
	// deficient (with a warning on stderr); otherwise throw SingularSystem.
	bool ridge_fallback = true;
};

// Least squares per output column with an intercept. inputs [n, p],
// targets [n, m]. Returns coefficients [p, m] and intercepts [m].
struct OlsSolution {
	Tensor coefficients;
	Tensor intercepts;
	bool used_ridge = false;
};
OlsSolution solve_ols(const Tensor &inputs, const Tensor &targets, const OlsOptions &options = {});

// Fit on the training split.
LinearModel fit_ols(const WindowedDataset &dataset, const OlsOptions &options = {});

struct QuantileFitOptions {
	std::size_t max_iterations = 20000;
	// Step at iteration t is learning_rate / (1 + t / decay_iterations).
	double learning_rate = 0.1;
	double decay_iterations = 100.0;
	// Stop when the best objective improves by less than this over a
	// window of `patience` iterations.
	double tolerance = 1e-9;
	std::size_t patience = 100;
};

struct QuantileFit {
	// [p, m*K] coefficients (absent for intercept-only fits) and [m*K]
	// intercepts, column order horizon-major.
	std::optional<Tensor> coefficients;
	Tensor intercepts;
	// Best objective so far (summed mean pinball over columns), recorded
	// every `patience` iterations; the returned parameters attain the last
	// entry.
	std::vector<double> objective_trace;
	std::size_t iterations = 0;
	bool converged = false;
};

// Full-batch subgradient descent on the pinball objective with a harmonic
// step decay, keeping the best iterate. inputs may be absent for an
// intercept-only fit; targets [n, m].
QuantileFit solve_quantile_linear(const std::optional<Tensor> &inputs, const Tensor &targets,
                                  const QuantileSet &quantiles, const QuantileFitOptions &options = {});

LinearModel fit_quantile_linear(const WindowedDataset &dataset, const QuantileSet &quantiles,
                                const QuantileFitOptions &options = {});

// windows [B, d, f] -> [B, m, K].
Tensor predict(const LinearModel &model, const Tensor &windows);

} // namespace qdl
