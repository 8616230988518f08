#include "qdl/tensor.hpp"

#include "qdl/error.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>

namespace qdl {

std::size_t shape_size(const Shape &shape) {
	return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape &shape) {
	std::ostringstream out;
	out << '[';
	for (std::size_t i = 0; i < shape.size(); ++i) {
		if (i != 0) {
			out << ',';
		}
		out << shape[i];
	}
	out << ']';
	return out.str();
}

namespace {

void validate_shape(const Shape &shape) {
	if (shape.empty()) {
		throw InvalidShape("shape must have at least one axis");
	}
	for (auto extent : shape) {
		if (extent == 0) {
			throw InvalidShape("zero extent in shape " + shape_to_string(shape));
		}
	}
}

} // namespace

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
	validate_shape(shape_);
	if (shape_size(shape_) != data_.size()) {
		throw InvalidShape("shape " + shape_to_string(shape_) + " does not match " + std::to_string(data_.size()) +
		                   " values");
	}
}

Tensor Tensor::zeros(Shape shape) {
	return constant(std::move(shape), 0.0);
}

Tensor Tensor::constant(Shape shape, double value) {
	validate_shape(shape);
	const auto n = shape_size(shape);
	return Tensor(std::move(shape), std::vector<double>(n, value));
}

std::pair<std::size_t, std::size_t> glorot_fans(const Shape &shape) {
	if (shape.size() == 1) {
		return {shape[0], shape[0]};
	}
	if (shape.size() == 2) {
		return {shape[0], shape[1]};
	}
	std::size_t receptive = 1;
	for (std::size_t i = 0; i + 2 < shape.size(); ++i) {
		receptive *= shape[i];
	}
	return {receptive * shape[shape.size() - 2], receptive * shape.back()};
}

Tensor Tensor::glorot_uniform(Shape shape, Rng &rng) {
	validate_shape(shape);
	const auto [fan_in, fan_out] = glorot_fans(shape);
	const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
	std::vector<double> data(shape_size(shape));
	for (auto &v : data) {
		v = rng.uniform(-limit, limit);
	}
	return Tensor(std::move(shape), std::move(data));
}

Tensor Tensor::standard_normal(Shape shape, Rng &rng) {
	validate_shape(shape);
	std::vector<double> data(shape_size(shape));
	for (auto &v : data) {
		v = rng.normal();
	}
	return Tensor(std::move(shape), std::move(data));
}

Tensor Tensor::from_list(std::initializer_list<double> values) {
	return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
	const std::size_t n_rows = rows.size();
	const std::size_t n_cols = n_rows == 0 ? 0 : rows.begin()->size();
	std::vector<double> data;
	data.reserve(n_rows * n_cols);
	for (const auto &row : rows) {
		if (row.size() != n_cols) {
			throw InvalidShape("ragged matrix literal");
		}
		data.insert(data.end(), row.begin(), row.end());
	}
	return Tensor({n_rows, n_cols}, std::move(data));
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
	if (index.size() != shape_.size()) {
		throw ShapeError("index rank " + std::to_string(index.size()) + " vs tensor " + shape_to_string(shape_));
	}
	std::size_t off = 0;
	std::size_t axis = 0;
	for (auto i : index) {
		if (i >= shape_[axis]) {
			throw ShapeError("index out of range on axis " + std::to_string(axis) + " of " + shape_to_string(shape_));
		}
		off = off * shape_[axis] + i;
		++axis;
	}
	return off;
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
	return data_[offset(index)];
}

double &Tensor::at(std::initializer_list<std::size_t> index) {
	return data_[offset(index)];
}

double Tensor::item() const {
	if (data_.size() != 1) {
		throw NotScalar("tensor " + shape_to_string(shape_) + " is not a scalar");
	}
	return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
	if (shape_size(shape) != data_.size()) {
		throw ShapeError("reshape " + shape_to_string(shape_) + " -> " + shape_to_string(shape));
	}
	return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
	constexpr std::uint64_t exponent = 0x7ff0000000000000ull;
	std::uint64_t bad = 0;
	for (double v : data_) {
		bad |= static_cast<std::uint64_t>((std::bit_cast<std::uint64_t>(v) & exponent) == exponent);
	}
	return bad == 0;
}

} // namespace qdl
