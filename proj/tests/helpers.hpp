#pragma once

#include "qdl/datapipe.hpp"

#include <string>
#include <vector>

// Single-column series with integer time stamps.
inline qdl::RawSeries series_of(const std::vector<double> &values, const std::string &name = "value") {
	qdl::RawSeries s;
	s.name = "test";
	s.columns = {name};
	s.values = values;
	for (std::size_t t = 0; t < values.size(); ++t) {
		s.time_index.push_back(std::to_string(t));
	}
	return s;
}

inline qdl::WindowedDataset dataset_of(const std::vector<double> &values, std::size_t d, std::size_t m,
                                       std::uint64_t seed = 1) {
	return qdl::normalize_and_split(qdl::make_windows(series_of(values), d, m, 0), seed);
}
