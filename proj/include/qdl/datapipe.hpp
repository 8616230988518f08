#pragma once

#include "qdl/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace qdl {

// T observations x f features, row-major, ordered by time.
struct RawSeries {
	std::string name;
	std::vector<std::string> columns;
	std::vector<std::string> time_index;
	std::vector<double> values;

	std::size_t rows() const { return columns.empty() ? 0 : values.size() / columns.size(); }
	std::size_t features() const { return columns.size(); }
	double at(std::size_t t, std::size_t feature) const { return values[t * columns.size() + feature]; }
	std::vector<double> column(std::size_t feature) const;
	std::size_t column_index(const std::string &name) const;

	// Keeps only the named columns, in the given order.
	RawSeries select(const std::vector<std::string> &names) const;
	// Rows at floor(i * T / count) for i in [0, count).
	RawSeries downsample(std::size_t count) const;
};

struct MackeyGlassParams {
	double a = 0.2;
	double b = 0.1;
	double exponent = 10.0;
	std::size_t delay = 10;
	std::size_t steps = 3000;
	double dt = 1.0;
	double history = 1.2;
	// The seed shifts the constant pre-history by U(-jitter, jitter).
	double history_jitter = 0.01;
};

struct LorenzParams {
	double rho = 28.0;
	double sigma = 10.0;
	double beta = 2.667;
	std::size_t steps = 10000;
	double dt = 0.01;
	std::array<double, 3> initial{0.0, 1.0, 1.05};
	// The seed shifts each initial coordinate by U(-jitter, jitter); zero by
	// default so the trajectory is the canonical one.
	double initial_jitter = 0.0;
	std::size_t component = 0;
};

// dx/dt = a x(t - delay) / (1 + x(t - delay)^n) - b x(t), RK4 on the delay
// grid with the delayed term at half steps linearly interpolated.
RawSeries gen_mackey_glass(const MackeyGlassParams &params, std::uint64_t seed);

struct LorenzSeries {
	RawSeries component;
	RawSeries full;
};

LorenzSeries gen_lorenz(const LorenzParams &params, std::uint64_t seed);

enum class CsvSchema { Crypto, Univariate };

struct CsvOptions {
	CsvSchema schema = CsvSchema::Crypto;
	// Column read by the univariate schema.
	std::string value_column = "Value";
};

// Crypto: Date, High, Low, Open, Close, Volume (extra columns dropped).
// Univariate: Date plus the value column. Header lookup ignores case.
// Dates: YYYY-MM-DD[ time], DD/MM/YYYY, or an integer step index. Rows are
// returned in ascending date order. Rows are numbered from 1 (the header).
RawSeries load_csv(const std::filesystem::path &path, const CsvOptions &options = {});
void write_csv(const std::filesystem::path &path, const RawSeries &series);

class MinMaxScaler {
public:
	MinMaxScaler() = default;
	MinMaxScaler(std::vector<std::string> names, std::vector<double> lo, std::vector<double> hi);

	double apply(double value, std::size_t feature) const;
	double invert(double value, std::size_t feature) const;
	const std::vector<double> &lo() const { return lo_; }
	const std::vector<double> &hi() const { return hi_; }
	std::size_t features() const { return lo_.size(); }

private:
	std::vector<std::string> names_;
	std::vector<double> lo_;
	std::vector<double> hi_;
};

enum class Split { Train, Test, All };

struct WindowedDataset {
	// inputs [N, d, f], targets [N, m].
	Tensor inputs;
	Tensor targets;
	std::size_t window = 0;
	std::size_t horizon = 0;
	std::size_t target_column = 0;
	RawSeries source;
	std::optional<MinMaxScaler> scaler;
	std::vector<std::size_t> train_indices;
	std::vector<std::size_t> test_indices;
	std::optional<std::uint64_t> split_seed;

	std::size_t size() const { return inputs.dim(0); }
	std::size_t features() const { return inputs.dim(2); }
	bool finalized() const { return scaler.has_value(); }
	std::vector<std::size_t> indices(Split split) const;

	// Gathers the given windows into [b, d, f] inputs and [b, m] targets.
	std::pair<Tensor, Tensor> batch(std::span<const std::size_t> ids) const;

	// Maps normalized target-column values back to the original scale.
	Tensor denormalize_targets(const Tensor &values) const;
};

// N = T - d - m + 1 windows: input rows t..t+d-1, target rows t+d..t+d+m-1 of
// the target column.
WindowedDataset make_windows(const RawSeries &series, std::size_t window, std::size_t horizon,
                             std::size_t target_column);

struct SplitOptions {
	double train_fraction = 0.8;
	// Fit min/max on raw rows covered by training windows only. Off by
	// default: scaling is fit on the whole series before the split.
	bool fit_on_train_only = false;
};

// Min-max scales every feature to [0,1] and partitions window ids by a
// seeded shuffle: |train| = round(fraction * N).
WindowedDataset normalize_and_split(const WindowedDataset &dataset, std::uint64_t seed,
                                    const SplitOptions &options = {});

} // namespace qdl
