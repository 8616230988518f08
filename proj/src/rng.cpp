#include "qdl/rng.hpp"

#include <cmath>
#include <numbers>

namespace qdl {

namespace {

constexpr std::uint64_t rotl(std::uint64_t x, int k) {
	return (x << k) | (x >> (64 - k));
}

} // namespace

std::uint64_t splitmix64(std::uint64_t &x) {
	std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
	z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
	z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
	return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed) {
	std::uint64_t sm = seed;
	for (auto &word : state_) {
		word = splitmix64(sm);
	}
}

Rng Rng::from_state(const State &state) {
	Rng rng;
	rng.state_ = state;
	return rng;
}

std::uint64_t Rng::next_u64() {
	auto &s = state_;
	const std::uint64_t result = rotl(s[1] * 5, 7) * 9;
	const std::uint64_t t = s[1] << 17;
	s[2] ^= s[0];
	s[3] ^= s[1];
	s[1] ^= s[2];
	s[0] ^= s[3];
	s[2] ^= t;
	s[3] = rotl(s[3], 45);
	return result;
}

double Rng::uniform() {
	return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
	return lo + (hi - lo) * uniform();
}

double Rng::normal() {
	if (has_cached_normal_) {
		has_cached_normal_ = false;
		return cached_normal_;
	}
	double u1 = 0.0;
	do {
		u1 = uniform();
	} while (u1 <= 0.0);
	const double u2 = uniform();
	const double radius = std::sqrt(-2.0 * std::log(u1));
	const double angle = 2.0 * std::numbers::pi * u2;
	cached_normal_ = radius * std::sin(angle);
	has_cached_normal_ = true;
	return radius * std::cos(angle);
}

std::uint64_t Rng::below(std::uint64_t bound) {
	if (bound <= 1) {
		return 0;
	}
	const std::uint64_t threshold = (0 - bound) % bound;
	for (;;) {
		const std::uint64_t r = next_u64();
		if (r >= threshold) {
			return r % bound;
		}
	}
}

Rng Rng::split() {
	return Rng(next_u64());
}

} // namespace qdl
