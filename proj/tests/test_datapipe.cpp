#include "helpers.hpp"

#include "qdl/datapipe.hpp"
#include "qdl/error.hpp"
#include "qdl/rng.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

using namespace qdl;

namespace {

std::filesystem::path write_temp(const std::string &name, const std::string &text) {
	const auto path = std::filesystem::temp_directory_path() / name;
	std::ofstream(path) << text;
	return path;
}

} // namespace

TEST_CASE("mackey-glass generator") {
	MackeyGlassParams p;
	const auto a = gen_mackey_glass(p, 1);
	CHECK(a.rows() == 3000);
	CHECK(a.values == gen_mackey_glass(p, 1).values);
	CHECK(a.values != gen_mackey_glass(p, 2).values);
	for (double v : a.values) {
		CHECK(std::abs(v) < 2.0);
	}
	CHECK_THROWS_AS(gen_mackey_glass(MackeyGlassParams{.steps = 5}, 0), ConfigError);
}

TEST_CASE("mackey-glass without feedback is pure decay") {
	MackeyGlassParams p;
	p.a = 0.0;
	p.steps = 200;
	const auto s = gen_mackey_glass(p, 3);
	const double x0 = s.values[0];
	CHECK(std::abs(x0 - 1.2) <= 0.01);
	for (std::size_t t = 0; t < s.rows(); ++t) {
		const double exact = x0 * std::exp(-p.b * static_cast<double>(t));
		CHECK(s.values[t] == doctest::Approx(exact).epsilon(1e-6));
	}
}

TEST_CASE("lorenz generator") {
	const auto l = gen_lorenz(LorenzParams{}, 0);
	CHECK(l.component.rows() == 10000);
	CHECK(l.full.features() == 3);
	CHECK(l.component.column(0) == l.full.column(0));

	LorenzParams frozen;
	frozen.sigma = 0.0;
	frozen.steps = 500;
	for (double v : gen_lorenz(frozen, 0).component.values) {
		CHECK(v == 0.0);
	}

	LorenzParams coarse;
	coarse.steps = 100;
	LorenzParams fine = coarse;
	fine.dt = coarse.dt / 2;
	fine.steps = 200;
	const auto xc = gen_lorenz(coarse, 0).full;
	const auto xf = gen_lorenz(fine, 0).full;
	double worst = 0.0;
	for (std::size_t t = 0; t < 100; ++t) {
		for (std::size_t c = 0; c < 3; ++c) {
			worst = std::max(worst, std::abs(xc.at(t, c) - xf.at(2 * t, c)));
		}
	}
	CHECK(worst < 1e-3);
}

TEST_CASE("downsample keeps evenly spaced rows") {
	std::vector<double> v(10);
	for (std::size_t i = 0; i < 10; ++i) {
		v[i] = static_cast<double>(i);
	}
	const auto d = series_of(v).downsample(4);
	CHECK(d.values == std::vector<double>{0, 2, 5, 7});
}

TEST_CASE("crypto csv ingestion") {
	const auto path = write_temp("qdl_crypto.csv",
	                             "SNo,Name,Symbol,date,high,LOW,Open,Close,Volume,Marketcap\n"
	                             "2,Bitcoin,BTC,2013-04-30 23:59:59,146.9,134.0,144.0,139.0,0,1\n"
	                             "1,Bitcoin,BTC,2013-04-29 23:59:59,147.4,134.0,134.4,144.5,0,1\n"
	                             "3,Bitcoin,BTC,2013-05-01 23:59:59,139.8,107.7,139.0,116.9,0,1\n");
	const auto s = load_csv(path);
	CHECK(s.columns == std::vector<std::string>{"High", "Low", "Open", "Close", "Volume"});
	CHECK(s.rows() == 3);
	CHECK(s.at(0, 3) == 144.5);
	CHECK(s.at(2, 3) == 116.9);
	std::filesystem::remove(path);

	const auto dmy = write_temp("qdl_dmy.csv", "Date,Value\n02/01/2020,2\n01/01/2020,1\n");
	const auto u = load_csv(dmy, CsvOptions{CsvSchema::Univariate});
	CHECK(u.values == std::vector<double>{1, 2});
	std::filesystem::remove(dmy);
}

TEST_CASE("csv errors") {
	const auto missing = write_temp("qdl_missing.csv", "Date,High,Open\n2020-01-01,1,2\n");
	try {
		load_csv(missing);
		FAIL("expected SchemaError");
	} catch (const SchemaError &e) {
		const std::string what = e.what();
		CHECK(what.find("Low") != std::string::npos);
		CHECK(what.find("Close") != std::string::npos);
		CHECK(what.find("Volume") != std::string::npos);
	}
	std::filesystem::remove(missing);

	const auto dup = write_temp("qdl_dup.csv", "Date,High,Low,Open,Close,Volume\n"
	                                           "Date,High,Low,Open,Close,Volume\n"
	                                           "2020-01-01,1,1,1,1,1\n");
	try {
		load_csv(dup);
		FAIL("expected ParseError");
	} catch (const ParseError &e) {
		CHECK(std::string(e.what()).find("row 2") != std::string::npos);
	}
	std::filesystem::remove(dup);

	const auto bad = write_temp("qdl_bad.csv", "Date,Value\n2020-01-01,1\n2020-01-02,1\n2020-01-03,abc\n");
	try {
		load_csv(bad, CsvOptions{CsvSchema::Univariate});
		FAIL("expected ParseError");
	} catch (const ParseError &e) {
		CHECK(std::string(e.what()).find("row 4") != std::string::npos);
	}
	std::filesystem::remove(bad);
}

TEST_CASE("csv write and read back") {
	const auto s = gen_mackey_glass(MackeyGlassParams{.steps = 50}, 4);
	const auto path = std::filesystem::temp_directory_path() / "qdl_roundtrip.csv";
	write_csv(path, s);
	CsvOptions opts{CsvSchema::Univariate, s.columns[0]};
	const auto back = load_csv(path, opts);
	CHECK(back.values == s.values);
	std::filesystem::remove(path);
}

TEST_CASE("window enumeration") {
	std::vector<double> v(13);
	for (std::size_t i = 0; i < 13; ++i) {
		v[i] = static_cast<double>(i + 1);
	}
	const auto w = make_windows(series_of(v), 6, 5, 0);
	CHECK(w.size() == 3);
	for (std::size_t j = 0; j < 6; ++j) {
		CHECK(w.inputs.at({0, j, 0}) == static_cast<double>(j + 1));
	}
	for (std::size_t j = 0; j < 5; ++j) {
		CHECK(w.targets.at({0, j}) == static_cast<double>(j + 7));
	}
	v.resize(12);
	CHECK(make_windows(series_of(v), 6, 5, 0).size() == 2);
	v.resize(11);
	CHECK_THROWS_AS(make_windows(series_of(v), 6, 5, 0), InsufficientData);
}

TEST_CASE("windows over random sizes match a naive loop") {
	Rng rng(1);
	for (int trial = 0; trial < 200; ++trial) {
		const std::size_t d = 2 + rng.below(8), m = 1 + rng.below(10);
		const std::size_t t_len = d + m + 1 + rng.below(60);
		const std::size_t f = 1 + rng.below(3);
		RawSeries s;
		for (std::size_t c = 0; c < f; ++c) {
			s.columns.push_back("c" + std::to_string(c));
		}
		for (std::size_t i = 0; i < t_len * f; ++i) {
			s.values.push_back(rng.uniform());
		}
		const std::size_t target = rng.below(f);
		const auto w = make_windows(s, d, m, target);
		REQUIRE(w.size() == t_len - d - m + 1);
		for (std::size_t n = 0; n < w.size(); ++n) {
			for (std::size_t j = 0; j < d; ++j) {
				for (std::size_t c = 0; c < f; ++c) {
					REQUIRE(w.inputs.at({n, j, c}) == s.at(n + j, c));
				}
			}
			for (std::size_t j = 0; j < m; ++j) {
				REQUIRE(w.targets.at({n, j}) == s.at(n + d + j, target));
			}
		}
	}
}

TEST_CASE("min-max scaling") {
	const MinMaxScaler sc({"x"}, {10.0}, {20.0});
	CHECK(sc.apply(15.0, 0) == 0.5);
	Rng rng(2);
	for (int i = 0; i < 1000; ++i) {
		const double x = rng.uniform(-100, 100);
		CHECK(std::abs(sc.invert(sc.apply(x, 0), 0) - x) <= 1e-12);
	}
	CHECK_THROWS_AS(dataset_of(std::vector<double>(20, 3.0), 4, 2), DegenerateFeature);
}

TEST_CASE("normalize and split") {
	std::vector<double> v(16);
	for (std::size_t i = 0; i < v.size(); ++i) {
		v[i] = std::sin(static_cast<double>(i)) * 5 + 10;
	}
	// T = 16, d = 4, m = 3 gives N = 10.
	const auto a = dataset_of(v, 4, 3, 42);
	CHECK(a.size() == 10);
	CHECK(a.train_indices.size() == 8);
	CHECK(a.test_indices.size() == 2);
	std::set<std::size_t> all(a.train_indices.begin(), a.train_indices.end());
	all.insert(a.test_indices.begin(), a.test_indices.end());
	CHECK(all.size() == 10);
	CHECK(*all.rbegin() == 9);
	const auto b = dataset_of(v, 4, 3, 42);
	CHECK(a.train_indices == b.train_indices);
	for (double x : a.inputs.values()) {
		CHECK(x >= 0.0);
		CHECK(x <= 1.0);
	}
	const auto raw = make_windows(series_of(v), 4, 3, 0);
	const auto back = a.denormalize_targets(a.targets);
	for (std::size_t i = 0; i < back.size(); ++i) {
		CHECK(back[i] == doctest::Approx(raw.targets[i]).epsilon(1e-12));
	}
}

TEST_CASE("train-only scaling") {
	std::vector<double> v(40);
	for (std::size_t i = 0; i < v.size(); ++i) {
		v[i] = static_cast<double>(i);
	}
	SplitOptions opts;
	opts.fit_on_train_only = true;
	const auto ds = normalize_and_split(make_windows(series_of(v), 4, 2, 0), 3, opts);
	for (std::size_t id : ds.train_indices) {
		for (std::size_t j = 0; j < 4; ++j) {
			CHECK(ds.inputs.at({id, j, 0}) >= 0.0);
			CHECK(ds.inputs.at({id, j, 0}) <= 1.0);
		}
	}
}
