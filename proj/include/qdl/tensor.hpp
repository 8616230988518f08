#pragma once

#include "qdl/rng.hpp"

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace qdl {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape &shape);
std::string shape_to_string(const Shape &shape);

// Dense row-major array of doubles. Every extent is >= 1 and
// product(shape) == data.size().
class Tensor {
public:
	Tensor() = default;
	Tensor(Shape shape, std::vector<double> data);

	static Tensor zeros(Shape shape);
	static Tensor constant(Shape shape, double value);
	// U(-L, L) with L = sqrt(6 / (fan_in + fan_out)); see glorot_fans().
	static Tensor glorot_uniform(Shape shape, Rng &rng);
	static Tensor standard_normal(Shape shape, Rng &rng);
	static Tensor from_list(std::initializer_list<double> values);
	static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

	const Shape &shape() const { return shape_; }
	std::size_t rank() const { return shape_.size(); }
	std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
	std::size_t size() const { return data_.size(); }
	bool empty() const { return data_.empty(); }

	std::span<const double> data() const { return data_; }
	std::span<double> data() { return data_; }
	const std::vector<double> &values() const { return data_; }

	double operator[](std::size_t i) const { return data_[i]; }
	double &operator[](std::size_t i) { return data_[i]; }

	double at(std::initializer_list<std::size_t> index) const;
	double &at(std::initializer_list<std::size_t> index);

	double item() const;

	// Same data, new shape with equal element count.
	Tensor reshaped(Shape shape) const;

	bool all_finite() const;

	friend bool operator==(const Tensor &a, const Tensor &b) = default;

private:
	std::size_t offset(std::initializer_list<std::size_t> index) const;

	Shape shape_;
	std::vector<double> data_;
};

// Fan-in / fan-out used by Glorot initialisation. Rank-2 [in, out];
// convolution kernels [k..., in_channels, filters] fold the receptive field
// into both fans; rank-1 uses n for both.
std::pair<std::size_t, std::size_t> glorot_fans(const Shape &shape);

} // namespace qdl
