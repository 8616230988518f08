#include "qdl/error.hpp"
#include "qdl/experiment.hpp"
#include "qdl/metrics.hpp"
#include "qdl/report.hpp"
#include "qdl/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace qdl;

namespace {

std::string slurp(const std::filesystem::path &p) {
	std::ifstream in(p, std::ios::binary);
	std::stringstream ss;
	ss << in.rdbuf();
	return ss.str();
}

ExperimentConfig tiny_config(const std::filesystem::path &out) {
	ExperimentConfig c;
	c.dataset.kind = DatasetKind::MackeyGlass;
	c.dataset.steps = 200;
	c.family = Family::EdLstm;
	c.hidden1 = 6;
	c.hidden2 = 6;
	c.window = 5;
	c.horizon = 3;
	c.epochs = 2;
	c.batch_size = 32;
	c.learning_rate = 1e-3;
	c.runs = 3;
	c.base_seed = 10;
	c.output_dir = out;
	return c;
}

std::filesystem::path fresh_dir(const std::string &name) {
	const auto dir = std::filesystem::temp_directory_path() / name;
	std::filesystem::remove_all(dir);
	return dir;
}

} // namespace

TEST_CASE("rmse") {
	const auto y = Tensor::matrix({{1, 2}, {3, 4}});
	CHECK(rmse(y, y).mean == 0.0);
	CHECK(rmse(Tensor::zeros({4}).data(), Tensor::constant({4}, 1.0).data()) == 1.0);
	CHECK_THROWS_AS(rmse(std::span<const double>(), std::span<const double>()), EmptyEval);

	Rng rng(1);
	const auto a = Tensor::standard_normal({100, 3}, rng);
	const auto b = Tensor::standard_normal({100, 3}, rng);
	const auto got = rmse(a, b);
	double mean = 0.0;
	for (std::size_t h = 0; h < 3; ++h) {
		double ss = 0.0;
		for (std::size_t i = 0; i < 100; ++i) {
			const double r = a.at({i, h}) - b.at({i, h});
			ss += r * r;
		}
		const double oracle = std::sqrt(ss / 100.0);
		CHECK(std::abs(got.per_horizon[h] - oracle) < 1e-12);
		mean += oracle / 3.0;
	}
	CHECK(std::abs(got.mean - mean) < 1e-12);
}

TEST_CASE("quantile rmse") {
	const QuantileSet qs({0.05, 0.5, 0.95});
	const auto y = Tensor::matrix({{1, 2}, {3, 4}});
	std::vector<double> same;
	for (double v : y.values()) {
		for (int k = 0; k < 3; ++k) {
			same.push_back(v);
		}
	}
	for (double r : quantile_rmse(y, Tensor({2, 2, 3}, same), qs)) {
		CHECK(r == 0.0);
	}

	Rng rng(2);
	const auto p = Tensor::standard_normal({2, 2, 3}, rng);
	const auto got = quantile_rmse(y, p, qs);
	for (std::size_t k = 0; k < 3; ++k) {
		double mean = 0.0;
		for (std::size_t h = 0; h < 2; ++h) {
			double ss = 0.0;
			for (std::size_t i = 0; i < 2; ++i) {
				const double r = y.at({i, h}) - p.at({i, h, k});
				ss += r * r;
			}
			mean += std::sqrt(ss / 2.0) / 2.0;
		}
		CHECK(got[k] == doctest::Approx(mean).epsilon(1e-14));
	}
	CHECK_THROWS_AS(quantile_rmse(y, p, QuantileSet({0.05, 0.25, 0.95})), MissingMedian);
}

TEST_CASE("coverage") {
	const QuantileSet qs({0.05, 0.5, 0.95});
	Rng rng(3);
	const auto y = Tensor::standard_normal({20, 4}, rng);
	std::vector<double> wide, flat;
	for (std::size_t c = 0; c < y.size(); ++c) {
		wide.insert(wide.end(), {-1e9, 0.0, 1e9});
		flat.insert(flat.end(), {y[c] + 1.0, y[c] + 1.0, y[c] + 1.0});
	}
	CHECK(coverage(y, Tensor({20, 4, 3}, wide), qs, 0.05, 0.95) == 1.0);
	CHECK(coverage(y, Tensor({20, 4, 3}, flat), qs, 0.05, 0.95) == 0.0);

	const auto p = Tensor::standard_normal({20, 4, 3}, rng);
	std::size_t inside = 0;
	for (std::size_t c = 0; c < y.size(); ++c) {
		inside += (y[c] >= p[c * 3] && y[c] <= p[c * 3 + 2]) ? 1 : 0;
	}
	CHECK(coverage(y, p, qs, 0.05, 0.95) == static_cast<double>(inside) / 80.0);
	CHECK_THROWS_AS(coverage(y, p, qs, 0.25, 0.95), MissingQuantile);
	CHECK_THROWS(coverage(y, p, qs, 0.95, 0.05));
}

TEST_CASE("crossing rate") {
	const QuantileSet qs({0.25, 0.5, 0.75});
	std::vector<double> mono, swapped;
	for (int c = 0; c < 6; ++c) {
		mono.insert(mono.end(), {0.0 + c, 1.0 + c, 2.0 + c});
		swapped.insert(swapped.end(), {1.0 + c, 0.0 + c, 2.0 + c});
	}
	CHECK(crossing_rate(Tensor({2, 3, 3}, mono), qs) == 0.0);
	CHECK(crossing_rate(Tensor({2, 3, 3}, swapped), qs) == 1.0);

	Rng rng(4);
	const auto p = Tensor::standard_normal({10, 5, 3}, rng);
	std::size_t crossed = 0;
	for (std::size_t c = 0; c < 50; ++c) {
		if (p[c * 3] > p[c * 3 + 1] || p[c * 3 + 1] > p[c * 3 + 2]) {
			++crossed;
		}
	}
	CHECK(crossing_rate(p, qs) == static_cast<double>(crossed) / 50.0);
	CHECK_THROWS_AS(crossing_rate(Tensor::zeros({1, 1, 1}), QuantileSet({0.5})), ConfigError);
}

TEST_CASE("confidence intervals") {
	const std::vector<double> runs{0.010, 0.012, 0.011, 0.015, 0.009};
	const double mean = 0.0114;
	double ss = 0.0;
	for (double v : runs) {
		ss += (v - mean) * (v - mean);
	}
	const auto ci = mean_interval(runs);
	CHECK(ci.mean == doctest::Approx(mean).epsilon(1e-14));
	CHECK(ci.half_width == doctest::Approx(1.96 * std::sqrt(ss / 4.0) / std::sqrt(5.0)).epsilon(1e-14));
	CHECK(mean_interval(std::vector<double>{0.3}).half_width == 0.0);

	// Half-width shrinks as 1 / sqrt(R) on resampled reports.
	Rng rng(5);
	auto width = [&](std::size_t r) {
		double total = 0.0;
		for (int rep = 0; rep < 200; ++rep) {
			std::vector<double> v(r);
			for (auto &x : v) {
				x = rng.normal();
			}
			total += mean_interval(v).half_width;
		}
		return total / 200.0;
	};
	const double ratio = width(16) / width(64);
	CHECK(ratio == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("aggregate reports") {
	ExperimentConfig cfg;
	cfg.horizon = 2;
	cfg.quantiles = {0.05, 0.5, 0.95};
	std::vector<RunReport> runs;
	for (int i = 0; i < 5; ++i) {
		RunReport r;
		r.seed = i;
		r.horizon_rmse = {0.01 * (i + 1), 0.02 * (i + 1)};
		r.mean_rmse = 0.015 * (i + 1);
		r.quantiles = cfg.quantiles;
		r.quantile_rmse = {0.03, 0.015 * (i + 1), 0.03};
		r.coverage = 0.9;
		r.crossing_rate = 0.0;
		runs.push_back(r);
	}
	const auto agg = aggregate(cfg, runs);
	CHECK(agg.completed == 5);
	REQUIRE(agg.find("rmse", "mean") != nullptr);
	CHECK(agg.find("rmse", "mean")->mean == doctest::Approx(0.045));
	CHECK(agg.find("rmse", "step2") != nullptr);
	CHECK(agg.find("quantile_rmse", "0.05") != nullptr);
	CHECK(agg.find("coverage", "0.05-0.95")->half_width == 0.0);

	const auto dir = fresh_dir("qdl_agg_test");
	std::filesystem::create_directories(dir);
	write_aggregate_csv(dir / "aggregate.csv", agg);
	const auto cells = read_aggregate_csv(dir / "aggregate.csv");
	CHECK(cells == agg.cells);

	write_table_csv(dir / "table.csv", agg);
	const auto table = slurp(dir / "table.csv");
	CHECK(table.starts_with("Model,Strategy,Mean,Step 1,Step 2\n"));

	AggregateReport empty;
	empty.horizons = 5;
	write_aggregate_csv(dir / "empty.csv", empty);
	CHECK(slurp(dir / "empty.csv") == "model,strategy,quantile,metric,key,mean,ci_half_width\n");
	CHECK(read_aggregate_csv(dir / "empty.csv").empty());
	write_table_csv(dir / "empty_table.csv", empty);
	CHECK(slurp(dir / "empty_table.csv") == "Model,Strategy,Mean,Step 1,Step 2,Step 3,Step 4,Step 5\n");

	CHECK_THROWS_AS(write_aggregate_csv(dir / "missing" / "deeper" / "a.csv", agg), IoError);
	std::filesystem::remove_all(dir);
}

TEST_CASE("config validation and file round trip") {
	ExperimentConfig c;
	c.strategy = Strategy::Multivariate;
	CHECK_THROWS_AS(c.validate(), ConfigError);
	c.strategy = Strategy::Univariate;
	c.quantiles = {0.1, 0.9};
	CHECK_THROWS_AS(c.validate(), ConfigError);
	c.quantiles = {0.5, 1.2};
	CHECK_THROWS_AS(c.validate(), InvalidQuantile);

	ExperimentConfig d;
	d.family = Family::ConvLstm;
	d.hidden1 = 7;
	d.runs = 4;
	const auto back = config_from_json(config_to_json(d));
	CHECK(config_to_json(back) == config_to_json(d));
	CHECK(config_hash(back) == config_hash(d));
	d.output_dir = "/elsewhere";
	CHECK(config_hash(back) == config_hash(d));
	d.runs = 5;
	CHECK(config_hash(back) != config_hash(d));
	CHECK_THROWS_AS(config_from_json(nlohmann::json{{"epochz", 3}}), ConfigError);

	// Fields absent from the file keep their defaults or earlier values.
	auto partial = config_from_json(nlohmann::json{{"window", 9}}, d);
	CHECK(partial.window == 9);
	CHECK(partial.family == Family::ConvLstm);
}

TEST_CASE("experiment campaign is reproducible and complete") {
	const auto d1 = fresh_dir("qdl_exp_a");
	const auto d2 = fresh_dir("qdl_exp_b");
	const auto r1 = run_experiment(tiny_config(d1));
	const auto r2 = run_experiment(tiny_config(d2));
	CHECK(r1.aggregate.completed == 3);
	CHECK(r1.aggregate.failures.empty());
	for (const char *file : {"aggregate.csv", "table.csv", "predictions.csv", "rmse_by_horizon.svg",
	                         "prediction_band.svg", "run_10.json", "run_12.json", "experiment.json"}) {
		CHECK(std::filesystem::exists(d1 / file));
	}
	CHECK(slurp(d1 / "aggregate.csv") == slurp(d2 / "aggregate.csv"));
	CHECK(slurp(d1 / "predictions.csv") == slurp(d2 / "predictions.csv"));

	for (const auto &run : r1.runs) {
		double mean = 0.0;
		for (double r : run.horizon_rmse) {
			CHECK(r >= 0.0);
			mean += r / static_cast<double>(run.horizon_rmse.size());
		}
		CHECK(run.mean_rmse == doctest::Approx(mean).epsilon(1e-14));
		CHECK(run.quantile_rmse[2] == doctest::Approx(run.mean_rmse).epsilon(1e-14));
	}

	const auto before = slurp(d1 / "aggregate.csv");
	std::filesystem::remove(d1 / "aggregate.csv");
	const auto re = reaggregate(d1);
	CHECK(re.aggregate.completed == 3);
	CHECK(slurp(d1 / "aggregate.csv") == before);

	std::filesystem::remove_all(d1);
	std::filesystem::remove_all(d2);
}

TEST_CASE("single-run campaign reports zero half-widths") {
	const auto dir = fresh_dir("qdl_exp_single");
	auto cfg = tiny_config(dir);
	cfg.runs = 1;
	cfg.family = Family::Linear;
	cfg.linear.max_iterations = 300;
	const auto r = run_experiment(cfg);
	REQUIRE(r.aggregate.completed == 1);
	for (const auto &cell : r.aggregate.cells) {
		CHECK(cell.half_width == 0.0);
	}
	std::filesystem::remove_all(dir);
}

TEST_CASE("failed runs are recorded and skipped") {
	auto cfg = tiny_config({});
	cfg.runs = 2;
	cfg.learning_rate = 1e307;
	const auto r = run_experiment(cfg);
	CHECK(r.aggregate.completed + r.aggregate.failures.size() == 2);
	CHECK(r.aggregate.failures.size() == 2);
	CHECK(r.aggregate.cells.empty());
}
