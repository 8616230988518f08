#include "qdl/experiment.hpp"

#include "qdl/checkpoint.hpp"
#include "qdl/error.hpp"
#include "qdl/metrics.hpp"
#include "qdl/report.hpp"

#include <algorithm>
#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>

namespace qdl {

using nlohmann::json;

std::string_view dataset_name(DatasetKind kind) {
	switch (kind) {
	case DatasetKind::MackeyGlass: return "mackey-glass";
	case DatasetKind::Lorenz: return "lorenz";
	case DatasetKind::Csv: return "csv";
	}
	return "unknown";
}

DatasetKind parse_dataset(std::string_view name) {
	if (name == "mackey-glass" || name == "mackeyglass") {
		return DatasetKind::MackeyGlass;
	}
	if (name == "lorenz") {
		return DatasetKind::Lorenz;
	}
	if (name == "csv") {
		return DatasetKind::Csv;
	}
	throw ConfigError("unknown dataset '" + std::string(name) + "'");
}

namespace {

std::string_view schema_name(CsvSchema schema) {
	return schema == CsvSchema::Crypto ? "crypto" : "univariate";
}

CsvSchema parse_schema(std::string_view name) {
	if (name == "crypto") {
		return CsvSchema::Crypto;
	}
	if (name == "univariate") {
		return CsvSchema::Univariate;
	}
	throw ConfigError("unknown csv schema '" + std::string(name) + "'");
}

std::string family_label(Family family) {
	switch (family) {
	case Family::Lstm: return "LSTM";
	case Family::BdLstm: return "BD-LSTM";
	case Family::EdLstm: return "ED-LSTM";
	case Family::ConvLstm: return "Conv-LSTM";
	case Family::Linear: return "Linear regression";
	}
	return "unknown";
}

std::string format_level(double q) {
	char buf[32];
	std::snprintf(buf, sizeof buf, "%g", q);
	return buf;
}

std::string strategy_label(Strategy strategy) {
	return strategy == Strategy::Univariate ? "Univariate" : "Multivariate";
}

} // namespace

void ExperimentConfig::validate() const {
	if (window == 0 || horizon == 0) {
		throw ConfigError("window and horizon must be positive");
	}
	if (runs == 0) {
		throw ConfigError("runs must be positive");
	}
	if (family != Family::Linear && (epochs == 0 || batch_size == 0)) {
		throw ConfigError("epochs and batch size must be positive");
	}
	if (!(learning_rate > 0.0)) {
		throw ConfigError("learning rate must be positive");
	}
	if (quantile) {
		validate_quantiles(quantiles);
		if (std::find(quantiles.begin(), quantiles.end(), 0.5) == quantiles.end()) {
			throw ConfigError("quantile set must contain the median 0.5");
		}
	}
	if (dataset.kind == DatasetKind::MackeyGlass && strategy == Strategy::Multivariate) {
		throw ConfigError("mackey-glass has a single feature; multivariate strategy needs a multi-feature dataset");
	}
	if (dataset.kind == DatasetKind::Csv) {
		if (dataset.csv_path.empty()) {
			throw ConfigError("csv dataset needs a path");
		}
		if (dataset.schema == CsvSchema::Univariate && strategy == Strategy::Multivariate) {
			throw ConfigError("univariate csv schema has a single feature; use the crypto schema");
		}
	}
	if (dataset.steps == 0 && dataset.kind != DatasetKind::Csv) {
		throw ConfigError("dataset steps must be positive");
	}
	if (!(split.train_fraction > 0.0 && split.train_fraction < 1.0)) {
		throw ConfigError("train fraction must lie in (0, 1)");
	}
	if (!(band_lo < band_hi)) {
		throw ConfigError("coverage band needs lo < hi");
	}
	model_spec(1).validate();
}

std::vector<double> ExperimentConfig::fitted_quantiles() const {
	return quantile ? quantiles : std::vector<double>{0.5};
}

ModelSpec ExperimentConfig::model_spec(std::size_t features) const {
	auto spec = ModelSpec::reference(family, features, window, horizon, fitted_quantiles());
	if (hidden1) {
		spec.hidden1 = *hidden1;
	}
	if (hidden2) {
		spec.hidden2 = *hidden2;
	}
	spec.arrangement = family == Family::Linear ? OutputArrangement::Grouped : arrangement;
	spec.validate();
	return spec;
}

std::string ExperimentConfig::model_label() const {
	if (family == Family::Linear) {
		return quantile ? "Quantile linear regression" : "Linear regression";
	}
	return (quantile ? "Quantile " : "") + family_label(family);
}

json config_to_json(const ExperimentConfig &c) {
	json j;
	j["dataset"] = {
	    {"kind", dataset_name(c.dataset.kind)},
	    {"steps", c.dataset.steps},
	    {"downsample", c.dataset.downsample},
	    {"seed", c.dataset.seed},
	    {"csv_path", c.dataset.csv_path.string()},
	    {"schema", schema_name(c.dataset.schema)},
	    {"value_column", c.dataset.value_column},
	    {"target", c.dataset.target},
	};
	j["strategy"] = strategy_name(c.strategy);
	j["family"] = family_name(c.family);
	j["quantile"] = c.quantile;
	j["quantiles"] = c.quantiles;
	j["window"] = c.window;
	j["horizon"] = c.horizon;
	j["hidden1"] = c.hidden1 ? json(*c.hidden1) : json(nullptr);
	j["hidden2"] = c.hidden2 ? json(*c.hidden2) : json(nullptr);
	j["arrangement"] = arrangement_name(c.arrangement);
	j["epochs"] = c.epochs;
	j["batch_size"] = c.batch_size;
	j["learning_rate"] = c.learning_rate;
	j["clip_norm"] = c.clip_norm ? json(*c.clip_norm) : json(nullptr);
	j["linear"] = {
	    {"max_iterations", c.linear.max_iterations},
	    {"learning_rate", c.linear.learning_rate},
	    {"decay_iterations", c.linear.decay_iterations},
	    {"tolerance", c.linear.tolerance},
	    {"patience", c.linear.patience},
	};
	j["split"] = {{"train_fraction", c.split.train_fraction}, {"fit_on_train_only", c.split.fit_on_train_only}};
	j["denormalized"] = c.denormalized;
	j["band"] = {c.band_lo, c.band_hi};
	j["runs"] = c.runs;
	j["base_seed"] = c.base_seed;
	j["output_dir"] = c.output_dir.string();
	return j;
}

namespace {

template <class T>
void take(const json &j, const char *key, T &out) {
	if (j.contains(key)) {
		out = j.at(key).get<T>();
	}
}

template <class T>
void take_optional(const json &j, const char *key, std::optional<T> &out) {
	if (j.contains(key)) {
		out = j.at(key).is_null() ? std::nullopt : std::optional<T>(j.at(key).get<T>());
	}
}

void reject_unknown(const json &j, std::initializer_list<const char *> keys, const std::string &where) {
	std::set<std::string> known(keys.begin(), keys.end());
	for (auto it = j.begin(); it != j.end(); ++it) {
		if (!known.contains(it.key())) {
			throw ConfigError("unknown config key '" + where + it.key() + "'");
		}
	}
}

} // namespace

ExperimentConfig config_from_json(const json &j, ExperimentConfig c) {
	if (!j.is_object()) {
		throw ConfigError("config must be a JSON object");
	}
	try {
		reject_unknown(j,
		               {"dataset", "strategy", "family", "quantile", "quantiles", "window", "horizon", "hidden1",
		                "hidden2", "arrangement", "epochs", "batch_size", "learning_rate", "clip_norm", "linear",
		                "split", "denormalized", "band", "runs", "base_seed", "output_dir"},
		               "");
		if (j.contains("dataset")) {
			const auto &d = j.at("dataset");
			reject_unknown(d, {"kind", "steps", "downsample", "seed", "csv_path", "schema", "value_column", "target"},
			               "dataset.");
			if (d.contains("kind")) {
				c.dataset.kind = parse_dataset(d.at("kind").get<std::string>());
			}
			take(d, "steps", c.dataset.steps);
			take(d, "downsample", c.dataset.downsample);
			take(d, "seed", c.dataset.seed);
			if (d.contains("csv_path")) {
				c.dataset.csv_path = d.at("csv_path").get<std::string>();
			}
			if (d.contains("schema")) {
				c.dataset.schema = parse_schema(d.at("schema").get<std::string>());
			}
			take(d, "value_column", c.dataset.value_column);
			take(d, "target", c.dataset.target);
		}
		if (j.contains("strategy")) {
			c.strategy = parse_strategy(j.at("strategy").get<std::string>());
		}
		if (j.contains("family")) {
			c.family = parse_family(j.at("family").get<std::string>());
		}
		take(j, "quantile", c.quantile);
		take(j, "quantiles", c.quantiles);
		take(j, "window", c.window);
		take(j, "horizon", c.horizon);
		take_optional(j, "hidden1", c.hidden1);
		take_optional(j, "hidden2", c.hidden2);
		if (j.contains("arrangement")) {
			c.arrangement = parse_arrangement(j.at("arrangement").get<std::string>());
		}
		take(j, "epochs", c.epochs);
		take(j, "batch_size", c.batch_size);
		take(j, "learning_rate", c.learning_rate);
		take_optional(j, "clip_norm", c.clip_norm);
		if (j.contains("linear")) {
			const auto &l = j.at("linear");
			reject_unknown(l, {"max_iterations", "learning_rate", "decay_iterations", "tolerance", "patience"},
			               "linear.");
			take(l, "max_iterations", c.linear.max_iterations);
			take(l, "learning_rate", c.linear.learning_rate);
			take(l, "decay_iterations", c.linear.decay_iterations);
			take(l, "tolerance", c.linear.tolerance);
			take(l, "patience", c.linear.patience);
		}
		if (j.contains("split")) {
			const auto &s = j.at("split");
			reject_unknown(s, {"train_fraction", "fit_on_train_only"}, "split.");
			take(s, "train_fraction", c.split.train_fraction);
			take(s, "fit_on_train_only", c.split.fit_on_train_only);
		}
		take(j, "denormalized", c.denormalized);
		if (j.contains("band")) {
			const auto band = j.at("band").get<std::vector<double>>();
			if (band.size() != 2) {
				throw ConfigError("band must be [lo, hi]");
			}
			c.band_lo = band[0];
			c.band_hi = band[1];
		}
		take(j, "runs", c.runs);
		take(j, "base_seed", c.base_seed);
		if (j.contains("output_dir")) {
			c.output_dir = j.at("output_dir").get<std::string>();
		}
	} catch (const json::exception &e) {
		throw ConfigError(std::string("bad config value: ") + e.what());
	}
	return c;
}

ExperimentConfig load_config(const std::filesystem::path &path, ExperimentConfig base) {
	std::ifstream in(path);
	if (!in) {
		throw ConfigError("cannot read config file " + path.string());
	}
	json j;
	try {
		j = json::parse(in);
	} catch (const json::exception &e) {
		throw ConfigError("config file " + path.string() + ": " + e.what());
	}
	return config_from_json(j, std::move(base));
}

std::string config_hash(const ExperimentConfig &config) {
	auto j = config_to_json(config);
	j.erase("output_dir");
	char buf[17];
	std::snprintf(buf, sizeof buf, "%016" PRIx64, fnv1a(j.dump()));
	return buf;
}

RawSeries load_series(const ExperimentConfig &config) {
	const auto &d = config.dataset;
	RawSeries series;
	std::string target;
	switch (d.kind) {
	case DatasetKind::MackeyGlass: {
		MackeyGlassParams p;
		p.steps = d.steps;
		series = gen_mackey_glass(p, d.seed);
		break;
	}
	case DatasetKind::Lorenz: {
		LorenzParams p;
		p.steps = d.steps;
		series = gen_lorenz(p, d.seed).full;
		target = series.columns.front();
		break;
	}
	case DatasetKind::Csv: {
		CsvOptions options;
		options.schema = d.schema;
		options.value_column = d.value_column;
		series = load_csv(d.csv_path, options);
		if (d.schema == CsvSchema::Crypto) {
			target = series.columns[series.column_index("Close")];
		}
		break;
	}
	}
	if (d.downsample > 0) {
		series = series.downsample(d.downsample);
	}
	if (!d.target.empty()) {
		target = d.target;
	}
	if (target.empty()) {
		target = series.columns.front();
	}
	const std::size_t t = series.column_index(target);
	if (config.strategy == Strategy::Univariate) {
		series = series.select({series.columns[t]});
	} else {
		// Target first, remaining features in file order.
		std::vector<std::string> names{series.columns[t]};
		for (std::size_t i = 0; i < series.columns.size(); ++i) {
			if (i != t) {
				names.push_back(series.columns[i]);
			}
		}
		series = series.select(names);
	}
	return series;
}

WindowedDataset prepare_dataset(const ExperimentConfig &config, const RawSeries &series, std::uint64_t seed) {
	return normalize_and_split(make_windows(series, config.window, config.horizon, 0), seed, config.split);
}

json run_report_to_json(const RunReport &r) {
	json j;
	j["seed"] = r.seed;
	j["horizon_rmse"] = r.horizon_rmse;
	j["quantiles"] = r.quantiles;
	j["quantile_rmse"] = r.quantile_rmse;
	j["mean_rmse"] = r.mean_rmse;
	j["coverage"] = r.coverage ? json(*r.coverage) : json(nullptr);
	j["crossing_rate"] = r.crossing_rate ? json(*r.crossing_rate) : json(nullptr);
	j["loss_trace"] = r.loss_trace;
	j["wall_seconds"] = r.wall_seconds;
	return j;
}

RunReport run_report_from_json(const json &j) {
	try {
		RunReport r;
		r.seed = j.at("seed").get<std::uint64_t>();
		r.horizon_rmse = j.at("horizon_rmse").get<std::vector<double>>();
		r.quantiles = j.at("quantiles").get<std::vector<double>>();
		r.quantile_rmse = j.at("quantile_rmse").get<std::vector<double>>();
		r.mean_rmse = j.at("mean_rmse").get<double>();
		if (!j.at("coverage").is_null()) {
			r.coverage = j.at("coverage").get<double>();
		}
		if (!j.at("crossing_rate").is_null()) {
			r.crossing_rate = j.at("crossing_rate").get<double>();
		}
		r.loss_trace = j.value("loss_trace", std::vector<double>{});
		r.wall_seconds = j.value("wall_seconds", 0.0);
		return r;
	} catch (const json::exception &e) {
		throw ParseError(std::string("run report: ") + e.what());
	}
}

RunOutput execute_run(const ExperimentConfig &config, const RawSeries &series, std::uint64_t seed) {
	const auto start = std::chrono::steady_clock::now();
	Rng master(seed);
	const std::uint64_t split_seed = master.next_u64();
	const std::uint64_t shuffle_seed = master.next_u64();
	Rng init = master.split();

	const auto dataset = prepare_dataset(config, series, split_seed);
	const auto spec = config.model_spec(dataset.features());
	const QuantileSet quantiles(spec.quantiles);

	std::vector<double> trace;
	std::optional<Model> model;
	if (config.family == Family::Linear) {
		auto linear = config.quantile ? fit_quantile_linear(dataset, quantiles, config.linear) : fit_ols(dataset);
		model = linear.to_model();
	} else {
		TrainConfig tc;
		tc.epochs = config.epochs;
		tc.batch_size = config.batch_size;
		tc.shuffle_seed = shuffle_seed;
		tc.loss = config.quantile ? LossKind::Quantile : LossKind::Mse;
		tc.clip_norm = config.clip_norm;
		tc.adam.learning_rate = config.learning_rate;
		auto result = train(build_model(spec, init), dataset, tc);
		model = std::move(result.model);
		trace = std::move(result.loss_trace);
	}

	RunOutput out{{}, *model, {}, predict_split(*model, dataset, Split::Test)};
	const auto ids = dataset.indices(Split::Test);
	out.targets = dataset.batch(ids).second;
	if (config.denormalized) {
		out.targets = dataset.denormalize_targets(out.targets);
		out.predictions = dataset.denormalize_targets(out.predictions);
	}

	auto &r = out.report;
	r.seed = seed;
	r.quantiles = spec.quantiles;
	const auto median = slice_rmse(out.targets, out.predictions, quantiles.median_index());
	r.horizon_rmse = median.per_horizon;
	r.mean_rmse = median.mean;
	r.quantile_rmse = quantile_rmse(out.targets, out.predictions, quantiles);
	if (quantiles.index_of(config.band_lo) && quantiles.index_of(config.band_hi)) {
		r.coverage = coverage(out.targets, out.predictions, quantiles, config.band_lo, config.band_hi);
	}
	if (quantiles.size() >= 2) {
		r.crossing_rate = crossing_rate(out.predictions, quantiles);
	}
	r.loss_trace = std::move(trace);
	r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
	return out;
}

const AggregateCell *AggregateReport::find(const std::string &metric, const std::string &key) const {
	for (const auto &cell : cells) {
		if (cell.metric == metric && cell.key == key) {
			return &cell;
		}
	}
	return nullptr;
}

AggregateReport aggregate(const ExperimentConfig &config, const std::vector<RunReport> &runs,
                          std::vector<RunFailure> failures) {
	AggregateReport agg;
	agg.model = config.model_label();
	agg.strategy = strategy_label(config.strategy);
	agg.quantile = config.quantile;
	agg.horizons = config.horizon;
	agg.completed = runs.size();
	agg.failures = std::move(failures);
	agg.config_hash = config_hash(config);
	if (runs.empty()) {
		return agg;
	}
	if (runs.size() < 2) {
		std::cerr << "warning: " << runs.size() << " completed run; confidence half-widths reported as 0\n";
	}
	auto add = [&](const std::string &metric, const std::string &key, auto &&get) {
		std::vector<double> values;
		for (const auto &r : runs) {
			values.push_back(get(r));
		}
		const auto ci = mean_interval(values);
		agg.cells.push_back({metric, key, ci.mean, ci.half_width});
	};
	add("rmse", "mean", [](const RunReport &r) { return r.mean_rmse; });
	for (std::size_t h = 0; h < config.horizon; ++h) {
		add("rmse", "step" + std::to_string(h + 1), [h](const RunReport &r) { return r.horizon_rmse.at(h); });
	}
	const auto levels = runs.front().quantiles;
	for (std::size_t q = 0; q < levels.size(); ++q) {
		add("quantile_rmse", format_level(levels[q]), [q](const RunReport &r) { return r.quantile_rmse.at(q); });
	}
	if (runs.front().coverage) {
		add("coverage", format_level(config.band_lo) + "-" + format_level(config.band_hi),
		    [](const RunReport &r) { return r.coverage.value_or(0.0); });
	}
	if (runs.front().crossing_rate) {
		add("crossing_rate", "all", [](const RunReport &r) { return r.crossing_rate.value_or(0.0); });
	}
	return agg;
}

namespace {

void write_text(const std::filesystem::path &path, const std::string &text) {
	std::ofstream out(path, std::ios::binary);
	if (!out || !(out << text) || !out.flush()) {
		throw IoError("cannot write " + path.string());
	}
}

json experiment_summary(const ExperimentConfig &config, const AggregateReport &agg) {
	json failures = json::array();
	for (const auto &f : agg.failures) {
		failures.push_back({{"seed", f.seed}, {"error", f.message}});
	}
	return {{"config", config_to_json(config)},
	        {"config_hash", agg.config_hash},
	        {"completed", agg.completed},
	        {"failures", failures}};
}

void write_reports(const std::filesystem::path &dir, const AggregateReport &agg) {
	write_aggregate_csv(dir / "aggregate.csv", agg);
	write_table_csv(dir / "table.csv", agg);
	write_rmse_svg(dir / "rmse_by_horizon.svg", agg);
}

void prepare_dir(const std::filesystem::path &dir) {
	std::error_code ec;
	std::filesystem::create_directories(dir, ec);
	if (ec || !std::filesystem::is_directory(dir)) {
		throw IoError("cannot create output directory " + dir.string());
	}
}

} // namespace

ExperimentResult run_experiment(const ExperimentConfig &config) {
	config.validate();
	const bool persist = !config.output_dir.empty();
	if (persist) {
		prepare_dir(config.output_dir);
	}
	const RawSeries series = load_series(config);

	const std::size_t r_count = config.runs;
	std::vector<std::optional<RunOutput>> outputs(r_count);
	std::vector<std::string> errors(r_count);
#pragma omp parallel for schedule(dynamic, 1)
	for (std::size_t i = 0; i < r_count; ++i) {
		try {
			outputs[i] = execute_run(config, series, config.base_seed + i);
		} catch (const std::exception &e) {
			errors[i] = e.what();
		}
	}

	ExperimentResult result;
	std::vector<RunFailure> failures;
	const RunOutput *first = nullptr;
	for (std::size_t i = 0; i < r_count; ++i) {
		if (outputs[i]) {
			result.runs.push_back(outputs[i]->report);
			if (!first) {
				first = &*outputs[i];
			}
		} else {
			failures.push_back({config.base_seed + i, errors[i]});
			std::cerr << "run " << config.base_seed + i << " failed: " << errors[i] << "\n";
		}
	}
	result.aggregate = aggregate(config, result.runs, std::move(failures));

	if (persist) {
		const auto &dir = config.output_dir;
		write_text(dir / "experiment.json", experiment_summary(config, result.aggregate).dump(2) + "\n");
		for (const auto &r : result.runs) {
			write_text(dir / ("run_" + std::to_string(r.seed) + ".json"), run_report_to_json(r).dump(2) + "\n");
		}
		write_reports(dir, result.aggregate);
		if (first) {
			const auto levels = config.fitted_quantiles();
			write_predictions_csv(dir / "predictions.csv", first->targets, first->predictions, levels);
			write_band_svg(dir / "prediction_band.svg", first->targets, first->predictions, levels, config.band_lo,
			               config.band_hi);
			save_model(dir / ("model_" + std::to_string(first->report.seed) + ".json"), first->model);
		}
	}
	return result;
}

ExperimentResult reaggregate(const std::filesystem::path &dir) {
	std::ifstream in(dir / "experiment.json");
	if (!in) {
		throw IoError("no experiment.json in " + dir.string());
	}
	json summary;
	try {
		summary = json::parse(in);
	} catch (const json::exception &e) {
		throw ParseError("experiment.json: " + std::string(e.what()));
	}
	auto config = config_from_json(summary.at("config"));
	config.output_dir = dir;

	std::vector<RunFailure> failures;
	for (const auto &f : summary.value("failures", json::array())) {
		failures.push_back({f.at("seed").get<std::uint64_t>(), f.at("error").get<std::string>()});
	}
	std::vector<std::pair<std::uint64_t, RunReport>> found;
	for (const auto &entry : std::filesystem::directory_iterator(dir)) {
		const auto name = entry.path().filename().string();
		if (name.starts_with("run_") && name.ends_with(".json")) {
			std::ifstream run_in(entry.path());
			try {
				auto report = run_report_from_json(json::parse(run_in));
				found.emplace_back(report.seed, std::move(report));
			} catch (const json::exception &e) {
				throw ParseError(name + ": " + e.what());
			}
		}
	}
	std::sort(found.begin(), found.end(), [](const auto &a, const auto &b) { return a.first < b.first; });
	ExperimentResult result;
	for (auto &[seed, report] : found) {
		result.runs.push_back(std::move(report));
	}
	result.aggregate = aggregate(config, result.runs, std::move(failures));
	write_reports(dir, result.aggregate);
	return result;
}

} // namespace qdl
