#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace qdl {

// xoshiro256** (Blackman & Vigna, 2018) with state expanded from a 64-bit
// seed by SplitMix64. Every draw is defined in terms of integer arithmetic
// and IEEE-754 double operations only, so a seed reproduces the same stream
// on every platform. std:: distributions are deliberately not used because
// their algorithms are implementation-defined.
//
// split() derives an independent child stream; runs of an experiment use
// seeds base+0 .. base+R-1 and split per-purpose streams (init, shuffle,
// data split) from that.
class Rng {
public:
	using State = std::array<std::uint64_t, 4>;

	explicit Rng(std::uint64_t seed = 0);

	static Rng from_state(const State &state);

	std::uint64_t next_u64();

	// Uniform in [0, 1) with 53 bits of resolution.
	double uniform();
	double uniform(double lo, double hi);

	// Standard normal via the Box-Muller transform (one draw per call; the
	// second variate is cached).
	double normal();

	// Uniform integer in [0, bound) by rejection (unbiased).
	std::uint64_t below(std::uint64_t bound);

	Rng split();

	template <typename T>
	void shuffle(std::span<T> items) {
		for (std::size_t i = items.size(); i > 1; --i) {
			const auto j = static_cast<std::size_t>(below(i));
			std::swap(items[i - 1], items[j]);
		}
	}

	std::uint64_t seed() const { return seed_; }
	const State &state() const { return state_; }

private:
	std::uint64_t seed_ = 0;
	State state_{};
	bool has_cached_normal_ = false;
	double cached_normal_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t &x);

} // namespace qdl
