#include "qdl/checkpoint.hpp"
#include "qdl/datapipe.hpp"
#include "qdl/error.hpp"
#include "qdl/experiment.hpp"
#include "qdl/gradcheck_suite.hpp"
#include "qdl/trainer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <iostream>

using namespace qdl;

namespace {

std::filesystem::path output_root() {
	const char *root = std::getenv("QDL_OUTPUT_ROOT");
	return root && *root ? std::filesystem::path(root) : std::filesystem::path(".");
}

std::filesystem::path resolve(const std::filesystem::path &p) {
	return p.is_absolute() ? p : output_root() / p;
}

// Flags that mirror ExperimentConfig fields. Values land in `over` only when
// given on the command line, so they override a config file.
struct ConfigFlags {
	std::string config_file;
	nlohmann::json over = nlohmann::json::object();

	void attach(CLI::App *app) {
		app->add_option("--config", config_file, "JSON config file");
		add<std::string>(app, "--dataset", "dataset/kind", "mackey-glass | lorenz | csv");
		add<std::size_t>(app, "--steps", "dataset/steps", "generated series length");
		add<std::size_t>(app, "--downsample", "dataset/downsample", "keep this many rows (0 keeps all)");
		add<std::uint64_t>(app, "--data-seed", "dataset/seed", "generator seed");
		add<std::string>(app, "--csv", "dataset/csv_path", "input CSV path");
		add<std::string>(app, "--schema", "dataset/schema", "crypto | univariate");
		add<std::string>(app, "--value-column", "dataset/value_column", "column of a univariate CSV");
		add<std::string>(app, "--target", "dataset/target", "predicted column");
		add<std::string>(app, "--strategy", "strategy", "univariate | multivariate");
		add<std::string>(app, "--family", "family", "lstm | bdlstm | edlstm | convlstm | linear");
		add<bool>(app, "--quantile", "quantile", "quantile model (true) or point forecast (false)");
		add<std::vector<double>>(app, "--quantiles", "quantiles", "quantile levels");
		add<std::size_t>(app, "--window", "window", "input window d");
		add<std::size_t>(app, "--horizon", "horizon", "prediction horizon m");
		add<std::size_t>(app, "--hidden1", "hidden1", "first layer width");
		add<std::size_t>(app, "--hidden2", "hidden2", "second layer width");
		add<std::string>(app, "--arrangement", "arrangement", "vector | grouped");
		add<std::size_t>(app, "--epochs", "epochs", "training epochs");
		add<std::size_t>(app, "--batch-size", "batch_size", "minibatch size");
		add<double>(app, "--lr", "learning_rate", "Adam learning rate");
		add<double>(app, "--clip-norm", "clip_norm", "global gradient norm clip");
		add<std::size_t>(app, "--linear-iterations", "linear/max_iterations", "quantile-linear iterations");
		add<double>(app, "--linear-step", "linear/learning_rate", "quantile-linear initial step");
		add<double>(app, "--train-fraction", "split/train_fraction", "train share of windows");
		add<bool>(app, "--fit-on-train-only", "split/fit_on_train_only", "fit scaling on training rows only");
		add<bool>(app, "--denormalized", "denormalized", "report RMSE on the original scale");
		add<std::size_t>(app, "--runs", "runs", "independent runs R");
		add<std::uint64_t>(app, "--seed", "base_seed", "base seed");
		add<std::string>(app, "--out", "output_dir", "output directory (relative to QDL_OUTPUT_ROOT)");
	}

	template <class T>
	void add(CLI::App *app, const std::string &flag, const std::string &pointer, const std::string &help) {
		app->add_option_function<T>(
		    flag, [this, pointer](const T &v) { over[nlohmann::json::json_pointer("/" + pointer)] = v; }, help);
	}

	ExperimentConfig build() const {
		ExperimentConfig c;
		if (!config_file.empty()) {
			c = load_config(config_file, c);
		}
		c = config_from_json(over, c);
		if (!c.output_dir.empty()) {
			c.output_dir = resolve(c.output_dir);
		}
		c.validate();
		return c;
	}
};

void print_aggregate(const AggregateReport &agg) {
	std::printf("%s (%s): %zu run(s) completed, %zu failed, config %s\n", agg.model.c_str(), agg.strategy.c_str(),
	            agg.completed, agg.failures.size(), agg.config_hash.c_str());
	for (const auto &c : agg.cells) {
		std::printf("  %-14s %-10s %.6f ± %.6f\n", c.metric.c_str(), c.key.c_str(), c.mean, c.half_width);
	}
}

int cmd_generate(const std::string &kind, const MackeyGlassParams &mg, const LorenzParams &lz, std::size_t downsample,
                 bool all_components, std::uint64_t seed, const std::string &out) {
	RawSeries series;
	if (kind == "mackey-glass") {
		series = gen_mackey_glass(mg, seed);
	} else if (kind == "lorenz") {
		auto l = gen_lorenz(lz, seed);
		series = all_components ? l.full : l.component;
	} else {
		throw ConfigError("unknown generator '" + kind + "'");
	}
	if (downsample > 0) {
		series = series.downsample(downsample);
	}
	const auto path = resolve(out);
	write_csv(path, series);
	std::printf("wrote %zu rows to %s\n", series.rows(), path.string().c_str());
	return 0;
}

int cmd_train(ConfigFlags &flags, const std::string &model_out) {
	auto config = flags.build();
	const auto series = load_series(config);
	auto run = execute_run(config, series, config.base_seed);
	if (!model_out.empty()) {
		save_model(resolve(model_out), run.model);
	}
	if (!config.output_dir.empty()) {
		std::filesystem::create_directories(config.output_dir);
		std::ofstream(config.output_dir / ("run_" + std::to_string(run.report.seed) + ".json"))
		    << run_report_to_json(run.report).dump(2) << "\n";
	}
	std::printf("seed %llu mean RMSE %.6f\n", static_cast<unsigned long long>(run.report.seed), run.report.mean_rmse);
	for (std::size_t q = 0; q < run.report.quantiles.size(); ++q) {
		std::printf("  q=%g RMSE %.6f\n", run.report.quantiles[q], run.report.quantile_rmse[q]);
	}
	return 0;
}

int cmd_gradcheck(const GradSuiteOptions &options) {
	bool ok = true;
	for (const auto &e : gradcheck_suite(options)) {
		std::printf("%-4s %-36s trials %3zu coords %6zu kinks %3zu max rel err %.3e\n", e.passed ? "PASS" : "FAIL",
		            e.name.c_str(), e.trials, e.checked, e.kinks_excluded, e.max_rel_error);
		ok = ok && e.passed;
	}
	return ok ? 0 : 2;
}

} // namespace

int main(int argc, char **argv) {
	tune_allocator();
	CLI::App app{"Quantile deep learning forecasts"};
	app.require_subcommand(1);

	auto *gen = app.add_subcommand("generate", "Write a synthetic series to CSV");
	std::string gen_kind = "mackey-glass", gen_out;
	std::uint64_t gen_seed = 0;
	std::size_t gen_downsample = 0;
	bool gen_all = false;
	MackeyGlassParams mg;
	LorenzParams lz;
	gen->add_option("kind", gen_kind, "mackey-glass | lorenz")->required();
	gen->add_option("-o,--out", gen_out, "output CSV")->required();
	gen->add_option("--seed", gen_seed, "generator seed");
	gen->add_option("--steps", mg.steps, "Mackey-Glass length");
	gen->add_option("--lorenz-steps", lz.steps, "Lorenz integration steps");
	gen->add_option("--downsample", gen_downsample, "keep this many rows");
	gen->add_flag("--all-components", gen_all, "write x, y and z for Lorenz");

	auto *tr = app.add_subcommand("train", "Train and evaluate a single run");
	ConfigFlags train_flags;
	train_flags.attach(tr);
	std::string model_out;
	tr->add_option("--save-model", model_out, "checkpoint path");

	auto *ex = app.add_subcommand("experiment", "Run an R-run campaign and write reports");
	ConfigFlags exp_flags;
	exp_flags.attach(ex);

	auto *rep = app.add_subcommand("report", "Re-aggregate a finished campaign directory");
	std::string report_dir;
	rep->add_option("dir", report_dir, "campaign directory")->required();

	auto *gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
	GradSuiteOptions gc_options;
	gc->add_option("--seed", gc_options.seed, "trial seed");
	gc->add_option("--trials", gc_options.op_trials, "random trials per op kind");

	try {
		app.parse(argc, argv);
	} catch (const CLI::ParseError &e) {
		const int code = app.exit(e);
		return code == 0 ? 0 : 1;
	}

	try {
		if (*gen) {
			return cmd_generate(gen_kind, mg, lz, gen_downsample, gen_all, gen_seed, gen_out);
		}
		if (*tr) {
			return cmd_train(train_flags, model_out);
		}
		if (*ex) {
			auto config = exp_flags.build();
			if (config.output_dir.empty()) {
				config.output_dir = resolve("qdl-" + config_hash(config));
			}
			const auto result = run_experiment(config);
			print_aggregate(result.aggregate);
			std::printf("artifacts in %s\n", config.output_dir.string().c_str());
			return result.aggregate.completed > 0 ? 0 : 2;
		}
		if (*rep) {
			print_aggregate(reaggregate(resolve(report_dir)).aggregate);
			return 0;
		}
		if (*gc) {
			return cmd_gradcheck(gc_options);
		}
	} catch (const ConfigError &e) {
		std::cerr << e.what() << "\n";
		return 1;
	} catch (const InvalidQuantile &e) {
		std::cerr << e.what() << "\n";
		return 1;
	} catch (const SchemaError &e) {
		std::cerr << e.what() << "\n";
		return 1;
	} catch (const ParseError &e) {
		std::cerr << e.what() << "\n";
		return 1;
	} catch (const std::exception &e) {
		std::cerr << e.what() << "\n";
		return 2;
	}
	return 0;
}
