#include "qdl/report.hpp"

#include "qdl/error.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace qdl {

namespace {

std::ofstream open_out(const std::filesystem::path &path) {
	std::ofstream out(path, std::ios::binary);
	if (!out) {
		throw IoError("cannot write " + path.string());
	}
	return out;
}

void finish(std::ofstream &out, const std::filesystem::path &path) {
	out.flush();
	if (!out) {
		throw IoError("write failed for " + path.string());
	}
}

std::string num(double v, const char *fmt = "%.17g") {
	char buf[64];
	std::snprintf(buf, sizeof buf, fmt, v);
	return buf;
}

constexpr const char *kAggregateHeader = "model,strategy,quantile,metric,key,mean,ci_half_width";

std::vector<std::string> split_csv(const std::string &line) {
	std::vector<std::string> out;
	std::stringstream ss(line);
	std::string cell;
	while (std::getline(ss, cell, ',')) {
		out.push_back(cell);
	}
	if (!line.empty() && line.back() == ',') {
		out.emplace_back();
	}
	return out;
}

} // namespace

void write_aggregate_csv(const std::filesystem::path &path, const AggregateReport &report) {
	auto out = open_out(path);
	out << kAggregateHeader << "\n";
	for (const auto &c : report.cells) {
		out << report.model << "," << report.strategy << "," << (report.quantile ? "yes" : "no") << "," << c.metric
		    << "," << c.key << "," << num(c.mean) << "," << num(c.half_width) << "\n";
	}
	finish(out, path);
}

std::vector<AggregateCell> read_aggregate_csv(const std::filesystem::path &path) {
	std::ifstream in(path);
	if (!in) {
		throw IoError("cannot read " + path.string());
	}
	std::string line;
	if (!std::getline(in, line) || line != kAggregateHeader) {
		throw SchemaError(path.string() + ": unexpected header");
	}
	std::vector<AggregateCell> cells;
	std::size_t row = 1;
	while (std::getline(in, line)) {
		++row;
		if (line.empty()) {
			continue;
		}
		const auto f = split_csv(line);
		if (f.size() != 7) {
			throw ParseError(path.string() + " row " + std::to_string(row) + ": expected 7 fields");
		}
		try {
			cells.push_back({f[3], f[4], std::stod(f[5]), std::stod(f[6])});
		} catch (const std::exception &) {
			throw ParseError(path.string() + " row " + std::to_string(row) + ": bad number");
		}
	}
	return cells;
}

void write_table_csv(const std::filesystem::path &path, const AggregateReport &report) {
	auto out = open_out(path);
	out << "Model,Strategy,Mean";
	for (std::size_t h = 1; h <= report.horizons; ++h) {
		out << ",Step " << h;
	}
	out << "\n";
	if (report.completed > 0) {
		auto cell = [&](const std::string &key) {
			const auto *c = report.find("rmse", key);
			return c ? num(c->mean, "%.4f") + " ± " + num(c->half_width, "%.4f") : std::string();
		};
		out << report.model << "," << report.strategy << "," << cell("mean");
		for (std::size_t h = 1; h <= report.horizons; ++h) {
			out << "," << cell("step" + std::to_string(h));
		}
		out << "\n";
	}
	finish(out, path);
}

void write_predictions_csv(const std::filesystem::path &path, const Tensor &targets, const Tensor &predictions,
                           const std::vector<double> &quantiles) {
	const std::size_t n = targets.dim(0), m = targets.dim(1), k = quantiles.size();
	if (predictions.size() != n * m * k) {
		throw ShapeError("predictions " + shape_to_string(predictions.shape()) + " do not match targets");
	}
	auto out = open_out(path);
	out << "window,step,target";
	for (double q : quantiles) {
		out << ",q" << num(q, "%g");
	}
	out << "\n";
	for (std::size_t i = 0; i < n; ++i) {
		for (std::size_t h = 0; h < m; ++h) {
			out << i << "," << h + 1 << "," << num(targets[i * m + h]);
			for (std::size_t q = 0; q < k; ++q) {
				out << "," << num(predictions[(i * m + h) * k + q]);
			}
			out << "\n";
		}
	}
	finish(out, path);
}

namespace {

struct Frame {
	double width = 720, height = 400, left = 70, right = 20, top = 40, bottom = 50;
	double lo = 0, hi = 1;
	double x(double t, double count) const {
		return left + (count <= 1 ? 0.5 : t / (count - 1)) * (width - left - right);
	}
	double y(double v) const {
		const double span = hi > lo ? hi - lo : 1.0;
		return top + (1.0 - (v - lo) / span) * (height - top - bottom);
	}
};

void svg_open(std::ostream &out, const Frame &f, const std::string &title) {
	out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\"" << f.height
	    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
	out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
	out << "<text x=\"" << f.width / 2 << "\" y=\"20\" text-anchor=\"middle\">" << title << "</text>\n";
	out << "<line x1=\"" << f.left << "\" y1=\"" << f.height - f.bottom << "\" x2=\"" << f.width - f.right
	    << "\" y2=\"" << f.height - f.bottom << "\" stroke=\"black\"/>\n";
	out << "<line x1=\"" << f.left << "\" y1=\"" << f.top << "\" x2=\"" << f.left << "\" y2=\""
	    << f.height - f.bottom << "\" stroke=\"black\"/>\n";
	for (int t = 0; t <= 4; ++t) {
		const double v = f.lo + (f.hi - f.lo) * t / 4.0;
		out << "<text x=\"" << f.left - 6 << "\" y=\"" << f.y(v) + 4 << "\" text-anchor=\"end\">"
		    << num(v, "%.4g") << "</text>\n";
	}
}

std::string points(const std::vector<double> &xs, const std::vector<double> &ys) {
	std::string s;
	for (std::size_t i = 0; i < xs.size(); ++i) {
		s += num(xs[i], "%.2f") + "," + num(ys[i], "%.2f") + " ";
	}
	return s;
}

} // namespace

void write_rmse_svg(const std::filesystem::path &path, const AggregateReport &report) {
	std::vector<double> mean, hw;
	for (std::size_t h = 1; h <= report.horizons; ++h) {
		if (const auto *c = report.find("rmse", "step" + std::to_string(h))) {
			mean.push_back(c->mean);
			hw.push_back(c->half_width);
		}
	}
	Frame f;
	f.lo = 0.0;
	f.hi = 0.0;
	for (std::size_t i = 0; i < mean.size(); ++i) {
		f.hi = std::max(f.hi, mean[i] + hw[i]);
	}
	f.hi = f.hi > 0 ? f.hi * 1.1 : 1.0;
	auto out = open_out(path);
	svg_open(out, f, report.model + " (" + report.strategy + "): RMSE by prediction horizon");
	const double slot = (f.width - f.left - f.right) / std::max<std::size_t>(mean.size(), 1);
	for (std::size_t i = 0; i < mean.size(); ++i) {
		const double cx = f.left + slot * (i + 0.5);
		const double bar = slot * 0.6;
		out << "<rect x=\"" << cx - bar / 2 << "\" y=\"" << f.y(mean[i]) << "\" width=\"" << bar << "\" height=\""
		    << f.y(0) - f.y(mean[i]) << "\" fill=\"#7aa6d6\"/>\n";
		out << "<line x1=\"" << cx << "\" y1=\"" << f.y(mean[i] + hw[i]) << "\" x2=\"" << cx << "\" y2=\""
		    << f.y(std::max(0.0, mean[i] - hw[i])) << "\" stroke=\"black\"/>\n";
		for (double v : {mean[i] + hw[i], std::max(0.0, mean[i] - hw[i])}) {
			out << "<line x1=\"" << cx - 6 << "\" y1=\"" << f.y(v) << "\" x2=\"" << cx + 6 << "\" y2=\"" << f.y(v)
			    << "\" stroke=\"black\"/>\n";
		}
		out << "<text x=\"" << cx << "\" y=\"" << f.height - f.bottom + 18 << "\" text-anchor=\"middle\">Step "
		    << i + 1 << "</text>\n";
	}
	out << "</svg>\n";
	finish(out, path);
}

void write_band_svg(const std::filesystem::path &path, const Tensor &targets, const Tensor &predictions,
                    const std::vector<double> &quantiles, double lo, double hi) {
	const std::size_t n = targets.dim(0), m = targets.dim(1), k = quantiles.size();
	auto index = [&](double q) -> std::optional<std::size_t> {
		auto it = std::find(quantiles.begin(), quantiles.end(), q);
		if (it == quantiles.end()) {
			return std::nullopt;
		}
		return static_cast<std::size_t>(it - quantiles.begin());
	};
	const auto mid = index(0.5);
	const auto qlo = index(lo), qhi = index(hi);
	auto pred = [&](std::size_t i, std::size_t q) { return predictions[(i * m) * k + q]; };

	Frame f;
	f.lo = f.hi = n ? targets[0] : 0.0;
	for (std::size_t i = 0; i < n; ++i) {
		f.lo = std::min(f.lo, targets[i * m]);
		f.hi = std::max(f.hi, targets[i * m]);
		for (std::size_t q = 0; q < k; ++q) {
			f.lo = std::min(f.lo, pred(i, q));
			f.hi = std::max(f.hi, pred(i, q));
		}
	}
	auto out = open_out(path);
	svg_open(out, f, "Step 1 test predictions");
	std::vector<double> xs, ys;
	if (qlo && qhi && n > 0) {
		std::vector<double> bx, by;
		for (std::size_t i = 0; i < n; ++i) {
			bx.push_back(f.x(i, n));
			by.push_back(f.y(pred(i, *qhi)));
		}
		for (std::size_t i = n; i-- > 0;) {
			bx.push_back(f.x(i, n));
			by.push_back(f.y(pred(i, *qlo)));
		}
		out << "<polygon points=\"" << points(bx, by) << "\" fill=\"#f4b183\" fill-opacity=\"0.5\"/>\n";
	}
	for (std::size_t i = 0; i < n; ++i) {
		xs.push_back(f.x(i, n));
		ys.push_back(f.y(targets[i * m]));
	}
	out << "<polyline points=\"" << points(xs, ys) << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";
	if (mid) {
		ys.clear();
		for (std::size_t i = 0; i < n; ++i) {
			ys.push_back(f.y(pred(i, *mid)));
		}
		out << "<polyline points=\"" << points(xs, ys)
		    << "\" fill=\"none\" stroke=\"#c00000\" stroke-width=\"1\"/>\n";
	}
	out << "<text x=\"" << f.left + 10 << "\" y=\"" << f.top + 12 << "\">actual (black), median (red), band q"
	    << num(lo, "%g") << "-q" << num(hi, "%g") << "</text>\n";
	out << "</svg>\n";
	finish(out, path);
}

} // namespace qdl
