#pragma once

#include "qdl/datapipe.hpp"
#include "qdl/linear_baseline.hpp"
#include "qdl/models.hpp"
#include "qdl/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace qdl {

enum class DatasetKind { MackeyGlass, Lorenz, Csv };

std::string_view dataset_name(DatasetKind kind);
DatasetKind parse_dataset(std::string_view name);

struct DatasetConfig {
	DatasetKind kind = DatasetKind::MackeyGlass;
	// Generated length: Mackey-Glass samples or Lorenz integration steps.
	std::size_t steps = 3000;
	// Keep this many evenly spaced rows after generation/loading (0 keeps all).
	std::size_t downsample = 0;
	std::uint64_t seed = 0;
	std::filesystem::path csv_path;
	CsvSchema schema = CsvSchema::Crypto;
	std::string value_column = "Value";
	// Predicted column; empty picks the default (Close for crypto, the
	// single value column otherwise, x for Lorenz).
	std::string target;
};

struct ExperimentConfig {
	DatasetConfig dataset;
	Strategy strategy = Strategy::Univariate;
	Family family = Family::EdLstm;
	bool quantile = true;
	std::vector<double> quantiles = default_quantiles();
	std::size_t window = 6;
	std::size_t horizon = 5;
	// Override the reference layer sizes of the family.
	std::optional<std::size_t> hidden1;
	std::optional<std::size_t> hidden2;
	OutputArrangement arrangement = OutputArrangement::VectorBased;
	std::size_t epochs = 100;
	std::size_t batch_size = 64;
	double learning_rate = 1e-4;
	std::optional<double> clip_norm;
	// Linear family only.
	QuantileFitOptions linear;
	SplitOptions split;
	// Report RMSE on the original data scale instead of [0,1].
	bool denormalized = false;
	double band_lo = 0.05;
	double band_hi = 0.95;
	std::size_t runs = 30;
	std::uint64_t base_seed = 0;
	std::filesystem::path output_dir;

	// Throws ConfigError (or InvalidQuantile) when fields disagree.
	void validate() const;
	// Quantile levels actually fitted: Q, or {0.5} for point forecasts.
	std::vector<double> fitted_quantiles() const;
	ModelSpec model_spec(std::size_t features) const;
	// Row label, e.g. "Quantile ED-LSTM".
	std::string model_label() const;
};

nlohmann::json config_to_json(const ExperimentConfig &config);
// Fields absent from `j` keep their value in `base`. Unknown keys throw.
ExperimentConfig config_from_json(const nlohmann::json &j, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path &path, ExperimentConfig base = {});
// FNV-1a of the canonical JSON form, output directory excluded.
std::string config_hash(const ExperimentConfig &config);

RawSeries load_series(const ExperimentConfig &config);
// Windows of the selected columns, normalized and split with `seed`.
WindowedDataset prepare_dataset(const ExperimentConfig &config, const RawSeries &series, std::uint64_t seed);

struct RunReport {
	std::uint64_t seed = 0;
	std::vector<double> horizon_rmse;
	std::vector<double> quantiles;
	std::vector<double> quantile_rmse;
	// Mean over horizons of the median-quantile RMSE.
	double mean_rmse = 0.0;
	std::optional<double> coverage;
	std::optional<double> crossing_rate;
	std::vector<double> loss_trace;
	double wall_seconds = 0.0;
};

nlohmann::json run_report_to_json(const RunReport &report);
RunReport run_report_from_json(const nlohmann::json &j);

struct RunOutput {
	RunReport report;
	Model model;
	// Test split in index order: targets [n, m], predictions [n, m, K].
	Tensor targets;
	Tensor predictions;
};

// One complete run: split, init and shuffle all derive from `seed`.
RunOutput execute_run(const ExperimentConfig &config, const RawSeries &series, std::uint64_t seed);

struct RunFailure {
	std::uint64_t seed = 0;
	std::string message;
};

struct AggregateCell {
	// rmse (key "mean" or "step<h>"), quantile_rmse (key = level),
	// coverage (key "lo-hi"), crossing_rate (key "all").
	std::string metric;
	std::string key;
	double mean = 0.0;
	double half_width = 0.0;

	friend bool operator==(const AggregateCell &, const AggregateCell &) = default;
};

struct AggregateReport {
	std::string model;
	std::string strategy;
	bool quantile = false;
	std::size_t horizons = 0;
	std::size_t completed = 0;
	std::vector<RunFailure> failures;
	std::string config_hash;
	std::vector<AggregateCell> cells;

	const AggregateCell *find(const std::string &metric, const std::string &key) const;
};

// Warns on stderr when fewer than two runs completed.
AggregateReport aggregate(const ExperimentConfig &config, const std::vector<RunReport> &runs,
                          std::vector<RunFailure> failures = {});

struct ExperimentResult {
	AggregateReport aggregate;
	std::vector<RunReport> runs;
};

// Runs seeds base..base+R-1 concurrently, skipping failed runs, and writes
// artifacts under config.output_dir when it is set:
//   experiment.json      config, hash, completed count, failures
//   run_<seed>.json      per-run report
//   predictions.csv      test predictions of the first completed run
//   aggregate.csv        long-format means and 95% half-widths
//   table.csv            Mean, Step 1..Step m as "mean ± half-width"
//   rmse_by_horizon.svg  per-horizon RMSE with error bars
//   prediction_band.svg  first-run step-1 predictions with the quantile band
ExperimentResult run_experiment(const ExperimentConfig &config);

// Rebuilds the aggregate and reports from a finished output directory.
ExperimentResult reaggregate(const std::filesystem::path &dir);

} // namespace qdl
