#include "qdl/datapipe.hpp"

#include "qdl/error.hpp"
#include "qdl/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <numeric>
#include <sstream>

namespace qdl {

std::vector<double> RawSeries::column(std::size_t feature) const {
	std::vector<double> out(rows());
	for (std::size_t t = 0; t < out.size(); ++t) {
		out[t] = at(t, feature);
	}
	return out;
}

std::size_t RawSeries::column_index(const std::string &wanted) const {
	for (std::size_t i = 0; i < columns.size(); ++i) {
		if (columns[i] == wanted) {
			return i;
		}
	}
	throw SchemaError("series '" + name + "' has no column '" + wanted + "'");
}

RawSeries RawSeries::select(const std::vector<std::string> &names) const {
	std::vector<std::size_t> ids;
	for (const auto &n : names) {
		ids.push_back(column_index(n));
	}
	RawSeries out{name, names, time_index, {}};
	out.values.reserve(rows() * ids.size());
	for (std::size_t t = 0; t < rows(); ++t) {
		for (auto id : ids) {
			out.values.push_back(at(t, id));
		}
	}
	return out;
}

RawSeries RawSeries::downsample(std::size_t count) const {
	const std::size_t total = rows();
	if (count == 0 || count > total) {
		throw ConfigError("cannot downsample " + std::to_string(total) + " rows to " + std::to_string(count));
	}
	RawSeries out{name, columns, {}, {}};
	for (std::size_t i = 0; i < count; ++i) {
		const std::size_t t = i * total / count;
		if (!time_index.empty()) {
			out.time_index.push_back(time_index[t]);
		}
		for (std::size_t f = 0; f < features(); ++f) {
			out.values.push_back(at(t, f));
		}
	}
	return out;
}

RawSeries gen_mackey_glass(const MackeyGlassParams &p, std::uint64_t seed) {
	const auto lag = static_cast<std::size_t>(std::llround(static_cast<double>(p.delay) / p.dt));
	if (p.delay < 1 || lag < 1 || p.steps < p.delay + 2) {
		throw ConfigError("mackey-glass needs delay >= 1 and steps >= delay + 2");
	}
	Rng rng(seed);
	const double start = p.history + rng.uniform(-p.history_jitter, p.history_jitter);

	auto rhs = [&](double x, double delayed) {
		return p.a * delayed / (1.0 + std::pow(delayed, p.exponent)) - p.b * x;
	};

	// x[lag + n] is the sample at t = n; x[0..lag] is the constant pre-history.
	std::vector<double> x(lag + p.steps, start);
	for (std::size_t n = 0; n + 1 < p.steps; ++n) {
		const std::size_t i = lag + n;
		const double xn = x[i];
		const double d0 = x[i - lag];
		const double d1 = x[i - lag + 1];
		const double dh = 0.5 * (d0 + d1);
		const double k1 = rhs(xn, d0);
		const double k2 = rhs(xn + 0.5 * p.dt * k1, dh);
		const double k3 = rhs(xn + 0.5 * p.dt * k2, dh);
		const double k4 = rhs(xn + p.dt * k3, d1);
		x[i + 1] = xn + p.dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
	}

	RawSeries series{"mackey-glass", {"Value"}, {}, {}};
	series.values.assign(x.begin() + static_cast<std::ptrdiff_t>(lag), x.end());
	series.time_index.reserve(p.steps);
	for (std::size_t n = 0; n < p.steps; ++n) {
		series.time_index.push_back(std::to_string(n));
	}
	return series;
}

LorenzSeries gen_lorenz(const LorenzParams &p, std::uint64_t seed) {
	if (p.steps < 2) {
		throw ConfigError("lorenz needs at least 2 steps");
	}
	if (p.component > 2) {
		throw ConfigError("lorenz component must be 0 (x), 1 (y) or 2 (z)");
	}
	Rng rng(seed);
	std::array<double, 3> s = p.initial;
	for (auto &v : s) {
		v += rng.uniform(-p.initial_jitter, p.initial_jitter);
	}
	auto rhs = [&](const std::array<double, 3> &v) {
		return std::array<double, 3>{p.sigma * (v[1] - v[0]), v[0] * (p.rho - v[2]) - v[1], v[0] * v[1] - p.beta * v[2]};
	};
	auto axpy = [](const std::array<double, 3> &v, double h, const std::array<double, 3> &k) {
		return std::array<double, 3>{v[0] + h * k[0], v[1] + h * k[1], v[2] + h * k[2]};
	};

	LorenzSeries out;
	out.full = RawSeries{"lorenz", {"x", "y", "z"}, {}, {}};
	out.full.values.reserve(3 * p.steps);
	for (std::size_t n = 0; n < p.steps; ++n) {
		out.full.time_index.push_back(std::to_string(n));
		out.full.values.insert(out.full.values.end(), s.begin(), s.end());
		const auto k1 = rhs(s);
		const auto k2 = rhs(axpy(s, 0.5 * p.dt, k1));
		const auto k3 = rhs(axpy(s, 0.5 * p.dt, k2));
		const auto k4 = rhs(axpy(s, p.dt, k3));
		for (int c = 0; c < 3; ++c) {
			s[c] += p.dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
		}
	}
	out.component = out.full.select({out.full.columns[p.component]});
	out.component.name = "lorenz-" + out.full.columns[p.component];
	return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string &line) {
	std::vector<std::string> cells;
	std::string cell;
	bool quoted = false;
	for (std::size_t i = 0; i < line.size(); ++i) {
		const char ch = line[i];
		if (quoted) {
			if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
				cell.push_back('"');
				++i;
			} else if (ch == '"') {
				quoted = false;
			} else {
				cell.push_back(ch);
			}
		} else if (ch == '"') {
			quoted = true;
		} else if (ch == ',') {
			cells.push_back(std::move(cell));
			cell.clear();
		} else if (ch != '\r') {
			cell.push_back(ch);
		}
	}
	cells.push_back(std::move(cell));
	return cells;
}

std::string trim(const std::string &s) {
	const auto b = s.find_first_not_of(" \t");
	if (b == std::string::npos) {
		return {};
	}
	const auto e = s.find_last_not_of(" \t");
	return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
	std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
	return s;
}

bool parse_double(const std::string &text, double &out) {
	const std::string t = trim(text);
	if (t.empty()) {
		return false;
	}
	const char *first = t.data();
	const char *last = t.data() + t.size();
	if (*first == '+') {
		++first;
	}
	auto [ptr, ec] = std::from_chars(first, last, out);
	return ec == std::errc() && ptr == last && std::isfinite(out);
}

bool parse_uint(std::string_view s, long long &out) {
	if (s.empty()) {
		return false;
	}
	auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
	return ec == std::errc() && ptr == s.data() + s.size() && out >= 0;
}

// Sort key for a date cell; throws ParseError on failure.
long long date_key(const std::string &cell, std::size_t row) {
	const std::string t = trim(cell);
	long long y = 0;
	long long m = 0;
	long long d = 0;
	if (t.size() >= 10 && t[4] == '-' && t[7] == '-') {
		if (parse_uint(std::string_view(t).substr(0, 4), y) && parse_uint(std::string_view(t).substr(5, 2), m) &&
		    parse_uint(std::string_view(t).substr(8, 2), d) && m >= 1 && m <= 12 && d >= 1 && d <= 31) {
			return y * 10000 + m * 100 + d;
		}
	}
	const auto first = t.find('/');
	const auto second = first == std::string::npos ? std::string::npos : t.find('/', first + 1);
	if (second != std::string::npos) {
		std::string_view sv(t);
		auto tail = sv.substr(second + 1);
		tail = tail.substr(0, tail.find(' '));
		if (parse_uint(sv.substr(0, first), d) && parse_uint(sv.substr(first + 1, second - first - 1), m) &&
		    parse_uint(tail, y) && m >= 1 && m <= 12 && d >= 1 && d <= 31) {
			return y * 10000 + m * 100 + d;
		}
	}
	long long step = 0;
	if (parse_uint(t, step)) {
		return step;
	}
	throw ParseError("row " + std::to_string(row) + ": unparseable date '" + t + "'");
}

} // namespace

RawSeries load_csv(const std::filesystem::path &path, const CsvOptions &options) {
	std::ifstream in(path);
	if (!in) {
		throw IoError("cannot open '" + path.string() + "'");
	}
	std::string line;
	if (!std::getline(in, line)) {
		throw SchemaError("'" + path.string() + "' is empty");
	}
	const auto header = split_csv_line(line);

	std::vector<std::string> wanted;
	if (options.schema == CsvSchema::Crypto) {
		wanted = {"High", "Low", "Open", "Close", "Volume"};
	} else {
		wanted = {options.value_column};
	}
	auto find_column = [&](const std::string &name) -> std::optional<std::size_t> {
		for (std::size_t i = 0; i < header.size(); ++i) {
			if (lower(trim(header[i])) == lower(name)) {
				return i;
			}
		}
		return std::nullopt;
	};

	std::vector<std::string> missing;
	const auto date_col = find_column("Date");
	if (!date_col) {
		missing.push_back("Date");
	}
	std::vector<std::size_t> value_cols;
	for (const auto &w : wanted) {
		if (auto c = find_column(w)) {
			value_cols.push_back(*c);
		} else {
			missing.push_back(w);
		}
	}
	if (!missing.empty()) {
		std::string names;
		for (const auto &n : missing) {
			names += (names.empty() ? "" : ", ") + n;
		}
		throw SchemaError("'" + path.string() + "' is missing column(s): " + names);
	}

	struct Row {
		long long key;
		std::size_t order;
		std::string date;
		std::vector<double> values;
	};
	std::vector<Row> rows;
	std::size_t row_number = 1;
	while (std::getline(in, line)) {
		++row_number;
		if (trim(line).empty() || trim(line) == "\r") {
			continue;
		}
		const auto cells = split_csv_line(line);
		Row row;
		row.order = rows.size();
		if (*date_col >= cells.size()) {
			throw ParseError("row " + std::to_string(row_number) + ": missing Date cell");
		}
		row.date = trim(cells[*date_col]);
		row.key = date_key(row.date, row_number);
		for (std::size_t j = 0; j < value_cols.size(); ++j) {
			double v = 0.0;
			if (value_cols[j] >= cells.size() || !parse_double(cells[value_cols[j]], v)) {
				throw ParseError("row " + std::to_string(row_number) + ": unparseable " + wanted[j] + " value '" +
				                 (value_cols[j] < cells.size() ? cells[value_cols[j]] : std::string()) + "'");
			}
			row.values.push_back(v);
		}
		rows.push_back(std::move(row));
	}
	std::stable_sort(rows.begin(), rows.end(), [](const Row &a, const Row &b) { return a.key < b.key; });

	RawSeries series;
	series.name = path.stem().string();
	series.columns = wanted;
	for (auto &row : rows) {
		series.time_index.push_back(std::move(row.date));
		series.values.insert(series.values.end(), row.values.begin(), row.values.end());
	}
	return series;
}

void write_csv(const std::filesystem::path &path, const RawSeries &series) {
	std::ofstream out(path);
	if (!out) {
		throw IoError("cannot write '" + path.string() + "'");
	}
	out << "Date";
	for (const auto &c : series.columns) {
		out << ',' << c;
	}
	out << '\n';
	char buf[32];
	for (std::size_t t = 0; t < series.rows(); ++t) {
		out << (t < series.time_index.size() ? series.time_index[t] : std::to_string(t));
		for (std::size_t f = 0; f < series.features(); ++f) {
			std::snprintf(buf, sizeof buf, "%.17g", series.at(t, f));
			out << ',' << buf;
		}
		out << '\n';
	}
	if (!out) {
		throw IoError("failed writing '" + path.string() + "'");
	}
}

MinMaxScaler::MinMaxScaler(std::vector<std::string> names, std::vector<double> lo, std::vector<double> hi)
    : names_(std::move(names)), lo_(std::move(lo)), hi_(std::move(hi)) {
	for (std::size_t f = 0; f < lo_.size(); ++f) {
		if (!(hi_[f] > lo_[f])) {
			throw DegenerateFeature("feature '" + (f < names_.size() ? names_[f] : std::to_string(f)) +
			                        "' is constant (min = max = " + std::to_string(lo_[f]) + ")");
		}
	}
}

double MinMaxScaler::apply(double value, std::size_t feature) const {
	return (value - lo_[feature]) / (hi_[feature] - lo_[feature]);
}

double MinMaxScaler::invert(double value, std::size_t feature) const {
	return value * (hi_[feature] - lo_[feature]) + lo_[feature];
}

std::vector<std::size_t> WindowedDataset::indices(Split split) const {
	switch (split) {
	case Split::Train: return train_indices;
	case Split::Test: return test_indices;
	case Split::All: break;
	}
	std::vector<std::size_t> all(size());
	std::iota(all.begin(), all.end(), std::size_t{0});
	return all;
}

std::pair<Tensor, Tensor> WindowedDataset::batch(std::span<const std::size_t> ids) const {
	if (ids.empty()) {
		throw ConfigError("empty batch");
	}
	const std::size_t in_stride = window * features();
	std::vector<double> x(ids.size() * in_stride);
	std::vector<double> y(ids.size() * horizon);
	for (std::size_t i = 0; i < ids.size(); ++i) {
		std::copy_n(inputs.data().begin() + ids[i] * in_stride, in_stride, x.begin() + i * in_stride);
		std::copy_n(targets.data().begin() + ids[i] * horizon, horizon, y.begin() + i * horizon);
	}
	return {Tensor({ids.size(), window, features()}, std::move(x)), Tensor({ids.size(), horizon}, std::move(y))};
}

Tensor WindowedDataset::denormalize_targets(const Tensor &values) const {
	if (!scaler) {
		return values;
	}
	Tensor out = values;
	for (auto &v : out.data()) {
		v = scaler->invert(v, target_column);
	}
	return out;
}

WindowedDataset make_windows(const RawSeries &series, std::size_t window, std::size_t horizon,
                             std::size_t target_column) {
	const std::size_t rows = series.rows();
	const std::size_t f = series.features();
	if (window < 1 || horizon < 1) {
		throw ConfigError("window and horizon must be >= 1");
	}
	if (target_column >= f) {
		throw ConfigError("target column " + std::to_string(target_column) + " out of range");
	}
	if (rows <= window + horizon) {
		throw InsufficientData("series of " + std::to_string(rows) + " rows needs more than d + m = " +
		                       std::to_string(window + horizon));
	}
	const std::size_t n = rows - window - horizon + 1;
	std::vector<double> x(n * window * f);
	std::vector<double> y(n * horizon);
	for (std::size_t s = 0; s < n; ++s) {
		std::copy_n(series.values.begin() + static_cast<std::ptrdiff_t>(s * f), window * f,
		            x.begin() + static_cast<std::ptrdiff_t>(s * window * f));
		for (std::size_t h = 0; h < horizon; ++h) {
			y[s * horizon + h] = series.at(s + window + h, target_column);
		}
	}
	WindowedDataset ds;
	ds.inputs = Tensor({n, window, f}, std::move(x));
	ds.targets = Tensor({n, horizon}, std::move(y));
	ds.window = window;
	ds.horizon = horizon;
	ds.target_column = target_column;
	ds.source = series;
	return ds;
}

WindowedDataset normalize_and_split(const WindowedDataset &dataset, std::uint64_t seed, const SplitOptions &options) {
	if (dataset.finalized()) {
		throw ConfigError("dataset is already normalized");
	}
	if (!(options.train_fraction > 0.0 && options.train_fraction < 1.0)) {
		throw ConfigError("train fraction must lie in (0,1)");
	}
	WindowedDataset out = dataset;
	const std::size_t n = dataset.size();

	std::vector<std::size_t> order(n);
	std::iota(order.begin(), order.end(), std::size_t{0});
	Rng rng(seed);
	rng.shuffle(std::span<std::size_t>(order));
	const auto n_train = static_cast<std::size_t>(std::llround(options.train_fraction * static_cast<double>(n)));
	out.train_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
	out.test_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
	std::sort(out.train_indices.begin(), out.train_indices.end());
	std::sort(out.test_indices.begin(), out.test_indices.end());
	out.split_seed = seed;

	const RawSeries &src = dataset.source;
	const std::size_t f = src.features();
	std::vector<char> covered(src.rows(), options.fit_on_train_only ? 0 : 1);
	if (options.fit_on_train_only) {
		for (auto s : out.train_indices) {
			std::fill_n(covered.begin() + static_cast<std::ptrdiff_t>(s), dataset.window + dataset.horizon, 1);
		}
	}
	std::vector<double> lo(f, std::numeric_limits<double>::infinity());
	std::vector<double> hi(f, -std::numeric_limits<double>::infinity());
	for (std::size_t t = 0; t < src.rows(); ++t) {
		if (!covered[t]) {
			continue;
		}
		for (std::size_t j = 0; j < f; ++j) {
			lo[j] = std::min(lo[j], src.at(t, j));
			hi[j] = std::max(hi[j], src.at(t, j));
		}
	}
	out.scaler = MinMaxScaler(src.columns, lo, hi);

	for (std::size_t i = 0; i < out.inputs.size(); ++i) {
		out.inputs[i] = out.scaler->apply(out.inputs[i], i % f);
	}
	for (auto &v : out.targets.data()) {
		v = out.scaler->apply(v, dataset.target_column);
	}
	return out;
}

} // namespace qdl
