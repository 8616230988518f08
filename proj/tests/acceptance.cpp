// Acceptance checks: one PASS / FAIL / SKIP line per criterion.
//
// Environment:
//   QDL_BITCOIN_CSV   crypto CSV (Date, High, Low, Open, Close, Volume) for
//                     criterion 8; skipped when unset or missing
//   QDL_ACCEPT_ONLY   comma list of criterion numbers to run (default all)

#include "qdl/datapipe.hpp"
#include "qdl/experiment.hpp"
#include "qdl/gradcheck_suite.hpp"
#include "qdl/linear_baseline.hpp"
#include "qdl/quantile_loss.hpp"
#include "qdl/rng.hpp"
#include "qdl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>

using namespace qdl;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets.
constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 60.0;
constexpr double kPinballTol = 1e-15;
constexpr double kQuantileTol = 1e-3;
constexpr double kMackeyGlassRmse = 0.03;
constexpr double kLorenzRmse = 0.01;
constexpr double kCampaignCpuSeconds = 600.0;
constexpr std::size_t kOrderingRuns = 4;
constexpr double kCoverageLo = 0.78;
constexpr double kCoverageHi = 0.98;
constexpr double kCryptoLo = 0.008;
constexpr double kCryptoHi = 0.03;
constexpr double kRoundTripTol = 1e-12;
constexpr double kSlopeTol = 0.05;

// Training budget for the generated-series campaigns.
constexpr std::size_t kRuns = 5;
constexpr std::size_t kEpochs = 60;
constexpr std::size_t kBatch = 8;

enum class Outcome { Pass, Fail, Skip };

struct Line {
	Outcome outcome;
	std::string detail;
};

std::string fmt(const char *format, auto... args) {
	char buf[512];
	std::snprintf(buf, sizeof buf, format, args...);
	return buf;
}

double cpu_seconds() {
	return static_cast<double>(std::clock()) / CLOCKS_PER_SEC;
}

std::string slurp(const fs::path &p) {
	std::ifstream in(p, std::ios::binary);
	std::stringstream ss;
	ss << in.rdbuf();
	return ss.str();
}

fs::path scratch(const std::string &name) {
	const auto dir = fs::temp_directory_path() / "qdl_acceptance" / name;
	fs::remove_all(dir);
	return dir;
}

Line gradients() {
	const double t0 = cpu_seconds();
	GradSuiteOptions opts;
	opts.tol = kGradTol;
	const auto entries = gradcheck_suite(opts);
	const double seconds = cpu_seconds() - t0;
	double worst = 0.0;
	std::string failed;
	for (const auto &e : entries) {
		worst = std::max(worst, e.max_rel_error);
		if (!e.passed) {
			failed += " " + e.name;
		}
	}
	const bool ok = failed.empty() && seconds < kGradSeconds;
	return {ok ? Outcome::Pass : Outcome::Fail,
	        fmt("%zu blocks, max rel err %.2e, %.1f s cpu%s", entries.size(), worst, seconds,
	            failed.empty() ? "" : (" failed:" + failed).c_str())};
}

Line pinball_values() {
	const double a = pinball(1.0, 0.5, 0.95);
	const double b = pinball(0.5, 1.0, 0.95);
	const double c = pinball(0.3, 0.3, 0.95);
	const bool ok = std::abs(a - 0.475) <= kPinballTol && std::abs(b - 0.025) <= kPinballTol && c == 0.0;
	return {ok ? Outcome::Pass : Outcome::Fail, fmt("%.17g %.17g %.17g", a, b, c)};
}

// Objective minimisers over the sample points, widened to the interval
// between the extreme minimising points.
std::pair<double, double> argmin_set(const std::vector<double> &y, double q) {
	auto objective = [&](double c) {
		double s = 0.0;
		for (double v : y) {
			s += pinball(v, c, q);
		}
		return s;
	};
	double best = INFINITY;
	for (double c : y) {
		best = std::min(best, objective(c));
	}
	double lo = INFINITY, hi = -INFINITY;
	for (double c : y) {
		if (objective(c) <= best * (1.0 + 1e-12)) {
			lo = std::min(lo, c);
			hi = std::max(hi, c);
		}
	}
	// A grid over the sample range must not beat the sample minimum.
	const auto [mn, mx] = std::minmax_element(y.begin(), y.end());
	for (int i = 0; i <= 20000; ++i) {
		const double c = *mn + (*mx - *mn) * i / 20000.0;
		if (objective(c) < best * (1.0 - 1e-12)) {
			return {NAN, NAN};
		}
	}
	return {lo, hi};
}

Line quantile_minimiser() {
	Rng rng(2024);
	std::vector<double> y(200);
	for (auto &v : y) {
		v = rng.normal();
	}
	const std::vector<double> levels{0.05, 0.25, 0.5, 0.75, 0.95};
	const auto fit = solve_quantile_linear(std::nullopt, Tensor({200, 1}, y), QuantileSet(levels));
	double worst = 0.0;
	for (std::size_t k = 0; k < levels.size(); ++k) {
		const auto [lo, hi] = argmin_set(y, levels[k]);
		const double c = fit.intercepts[k];
		const double dist = std::isnan(lo) ? INFINITY : std::max({0.0, lo - c, c - hi});
		worst = std::max(worst, dist);
	}
	return {worst <= kQuantileTol ? Outcome::Pass : Outcome::Fail,
	        fmt("max distance to argmin %.2e over 5 levels", worst)};
}

ExperimentConfig generated_campaign(DatasetKind kind, const std::string &dir) {
	ExperimentConfig c;
	c.dataset.kind = kind;
	if (kind == DatasetKind::Lorenz) {
		c.dataset.steps = 10000;
		c.dataset.downsample = 3000;
	} else {
		c.dataset.steps = 3000;
	}
	c.family = Family::EdLstm;
	c.quantile = true;
	c.window = 5;
	c.horizon = 10;
	c.epochs = kEpochs;
	c.batch_size = kBatch;
	c.runs = kRuns;
	c.base_seed = 0;
	c.output_dir = scratch(dir);
	return c;
}

struct Campaign {
	ExperimentResult result;
	double cpu = 0.0;
	std::string error;
};

Campaign run_campaign(const ExperimentConfig &config) {
	Campaign out;
	const double t0 = cpu_seconds();
	try {
		out.result = run_experiment(config);
	} catch (const std::exception &e) {
		out.error = e.what();
	}
	out.cpu = cpu_seconds() - t0;
	return out;
}

Line reproduction(const Campaign &c, double limit, const char *label) {
	if (!c.error.empty()) {
		return {Outcome::Fail, c.error};
	}
	const auto *mean = c.result.aggregate.find("rmse", "mean");
	if (mean == nullptr || c.result.aggregate.completed != kRuns) {
		return {Outcome::Fail, fmt("%zu of %zu runs completed", c.result.aggregate.completed, kRuns)};
	}
	const bool ok = mean->mean <= limit && c.cpu <= kCampaignCpuSeconds;
	return {ok ? Outcome::Pass : Outcome::Fail,
	        fmt("%s median RMSE %.4f +- %.4f (limit %.3g), %.0f s cpu", label, mean->mean, mean->half_width, limit,
	            c.cpu)};
}

Line ordering(const Campaign &mg, const Campaign &lorenz) {
	std::string detail;
	bool ok = true;
	for (const auto *c : {&mg, &lorenz}) {
		std::size_t good = 0;
		for (const auto &run : c->result.runs) {
			const auto &r = run.quantile_rmse;
			good += (r.size() == 5 && r[2] < r[0] && r[2] < r[4]) ? 1 : 0;
		}
		ok = ok && good >= kOrderingRuns && c->error.empty();
		detail += fmt("%s%zu/%zu", detail.empty() ? "" : ", ", good, c->result.runs.size());
	}
	return {ok ? Outcome::Pass : Outcome::Fail, "ordered runs (mackey-glass, lorenz): " + detail};
}

Line coverage_band(const Campaign &mg) {
	const auto *cell = mg.result.aggregate.find("coverage", "0.05-0.95");
	if (cell == nullptr) {
		return {Outcome::Fail, "no coverage reported"};
	}
	const bool ok = cell->mean >= kCoverageLo && cell->mean <= kCoverageHi;
	return {ok ? Outcome::Pass : Outcome::Fail, fmt("coverage %.3f +- %.3f", cell->mean, cell->half_width)};
}

Line crypto() {
	const char *path = std::getenv("QDL_BITCOIN_CSV");
	if (path == nullptr || !fs::exists(path)) {
		return {Outcome::Skip, "set QDL_BITCOIN_CSV to a crypto CSV"};
	}
	ExperimentConfig c;
	c.dataset.kind = DatasetKind::Csv;
	c.dataset.csv_path = path;
	c.strategy = Strategy::Multivariate;
	c.family = Family::EdLstm;
	c.window = 6;
	c.horizon = 5;
	c.runs = kRuns;
	c.output_dir = scratch("bitcoin");
	const auto campaign = run_campaign(c);
	if (!campaign.error.empty()) {
		return {Outcome::Fail, campaign.error};
	}
	const auto *mean = campaign.result.aggregate.find("rmse", "mean");
	if (mean == nullptr) {
		return {Outcome::Fail, "no completed runs"};
	}
	const bool ok = mean->mean >= kCryptoLo && mean->mean <= kCryptoHi;
	return {ok ? Outcome::Pass : Outcome::Fail,
	        fmt("median RMSE %.4f +- %.4f, %.0f s cpu", mean->mean, mean->half_width, campaign.cpu)};
}

Line pipeline() {
	Rng rng(99);
	std::size_t bad_counts = 0;
	for (int trial = 0; trial < 200; ++trial) {
		const std::size_t d = 1 + rng.next_u64() % 12;
		const std::size_t m = 1 + rng.next_u64() % 12;
		const std::size_t t = d + m + 1 + rng.next_u64() % 300;
		RawSeries s;
		s.columns = {"v"};
		s.values.resize(t);
		for (std::size_t i = 0; i < t; ++i) {
			s.values[i] = static_cast<double>(i);
		}
		if (make_windows(s, d, m, 0).size() != t - d - m + 1) {
			++bad_counts;
		}
	}

	RawSeries s;
	s.columns = {"v"};
	for (int i = 0; i < 500; ++i) {
		s.values.push_back(1000.0 * rng.normal() + 37.0);
	}
	const auto raw = make_windows(s, 6, 5, 0);
	const auto ds = normalize_and_split(raw, 7);
	const auto back = ds.denormalize_targets(ds.targets);
	double round_trip = 0.0;
	for (std::size_t i = 0; i < back.size(); ++i) {
		round_trip = std::max(round_trip, std::abs(back[i] - raw.targets[i]) / std::max(1.0, std::abs(raw.targets[i])));
	}

	std::set<std::size_t> train(ds.train_indices.begin(), ds.train_indices.end());
	std::set<std::size_t> test(ds.test_indices.begin(), ds.test_indices.end());
	bool partition = train.size() == ds.train_indices.size() && test.size() == ds.test_indices.size() &&
	                 train.size() + test.size() == ds.size() &&
	                 train.size() == static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(ds.size())));
	for (std::size_t id : test) {
		partition = partition && !train.contains(id) && id < ds.size();
	}

	ExperimentConfig c;
	c.dataset.steps = 400;
	c.hidden1 = 8;
	c.hidden2 = 8;
	c.window = 5;
	c.horizon = 3;
	c.epochs = 2;
	c.batch_size = 32;
	c.runs = 3;
	c.base_seed = 5;
	bool identical = true;
	std::vector<fs::path> dirs{scratch("campaign_a"), scratch("campaign_b")};
	for (const auto &dir : dirs) {
		c.output_dir = dir;
		run_experiment(c);
	}
	for (const char *file : {"aggregate.csv", "table.csv", "predictions.csv", "rmse_by_horizon.svg"}) {
		identical = identical && fs::exists(dirs[0] / file) && slurp(dirs[0] / file) == slurp(dirs[1] / file);
	}

	const bool ok = bad_counts == 0 && round_trip <= kRoundTripTol && partition && identical;
	return {ok ? Outcome::Pass : Outcome::Fail,
	        fmt("window-count mismatches %zu/200, round trip %.1e, partition %s, campaigns %s", bad_counts, round_trip,
	            partition ? "ok" : "broken", identical ? "byte-identical" : "differ")};
}

Line baseline() {
	Rng rng(17);
	const std::size_t n = 500;
	std::vector<double> x(n), y(n);
	for (std::size_t i = 0; i < n; ++i) {
		x[i] = rng.uniform(-1.0, 1.0);
		y[i] = 1.5 * x[i] + 2.0 + 0.3 * rng.normal();
	}
	const Tensor xs({n, 1}, x), ys({n, 1}, y);
	const auto ols = solve_ols(xs, ys);
	const auto gd = solve_quantile_linear(xs, ys, QuantileSet({0.5}));
	const double slope = std::abs((*gd.coefficients)[0] - ols.coefficients[0]) / std::abs(ols.coefficients[0]);
	const double intercept = std::abs(gd.intercepts[0] - ols.intercepts[0]) / std::abs(ols.intercepts[0]);
	const bool ok = slope <= kSlopeTol && intercept <= kSlopeTol;
	return {ok ? Outcome::Pass : Outcome::Fail,
	        fmt("ols %.4f x + %.4f, median gd %.4f x + %.4f, rel err %.2e / %.2e", ols.coefficients[0],
	            ols.intercepts[0], (*gd.coefficients)[0], gd.intercepts[0], slope, intercept)};
}

std::set<int> selected() {
	std::set<int> out;
	const char *only = std::getenv("QDL_ACCEPT_ONLY");
	if (only == nullptr || *only == '\0') {
		for (int i = 1; i <= 10; ++i) {
			out.insert(i);
		}
		return out;
	}
	std::stringstream ss(only);
	std::string item;
	while (std::getline(ss, item, ',')) {
		out.insert(std::stoi(item));
	}
	return out;
}

} // namespace

int main() {
	tune_allocator();
	const auto wanted = selected();
	int failures = 0;
	auto report = [&](int id, const char *name, const std::function<Line()> &check) {
		if (!wanted.contains(id)) {
			return;
		}
		Line line;
		try {
			line = check();
		} catch (const std::exception &e) {
			line = {Outcome::Fail, std::string("exception: ") + e.what()};
		}
		const char *tag = line.outcome == Outcome::Pass ? "PASS" : line.outcome == Outcome::Fail ? "FAIL" : "SKIP";
		failures += line.outcome == Outcome::Fail ? 1 : 0;
		std::printf("[%s] %2d %-24s %s\n", tag, id, name, line.detail.c_str());
		std::fflush(stdout);
	};

	report(1, "gradient check", gradients);
	report(2, "pinball values", pinball_values);
	report(3, "quantile minimiser", quantile_minimiser);

	Campaign mg, lorenz;
	const bool need_mg = wanted.contains(4) || wanted.contains(6) || wanted.contains(7);
	const bool need_lorenz = wanted.contains(5) || wanted.contains(6);
	if (need_mg) {
		mg = run_campaign(generated_campaign(DatasetKind::MackeyGlass, "mackey_glass"));
	}
	if (need_lorenz) {
		lorenz = run_campaign(generated_campaign(DatasetKind::Lorenz, "lorenz"));
	}
	report(4, "mackey-glass", [&] { return reproduction(mg, kMackeyGlassRmse, "quantile ED-LSTM"); });
	report(5, "lorenz", [&] { return reproduction(lorenz, kLorenzRmse, "quantile ED-LSTM"); });
	report(6, "quantile ordering", [&] { return ordering(mg, lorenz); });
	report(7, "coverage", [&] { return coverage_band(mg); });
	report(8, "crypto", crypto);
	report(9, "pipeline properties", pipeline);
	report(10, "baseline agreement", baseline);

	std::printf("%d criteria failed\n", failures);
	return failures == 0 ? 0 : 1;
}
