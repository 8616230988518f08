#include "qdl/parameters.hpp"

#include "qdl/error.hpp"

namespace qdl {

ParamId ParameterSet::add(std::string name, Tensor value) {
	if (find(name)) {
		throw ConfigError("duplicate parameter name '" + name + "'");
	}
	entries_.push_back({std::move(name), std::move(value)});
	return entries_.size() - 1;
}

std::optional<ParamId> ParameterSet::find(const std::string &name) const {
	for (std::size_t i = 0; i < entries_.size(); ++i) {
		if (entries_[i].name == name) {
			return i;
		}
	}
	return std::nullopt;
}

const Tensor &ParameterSet::value(const std::string &name) const {
	auto id = find(name);
	if (!id) {
		throw ConfigError("unknown parameter '" + name + "'");
	}
	return entries_[*id].value;
}

Tensor &ParameterSet::value(const std::string &name) {
	auto id = find(name);
	if (!id) {
		throw ConfigError("unknown parameter '" + name + "'");
	}
	return entries_[*id].value;
}

std::size_t ParameterSet::count() const {
	std::size_t total = 0;
	for (const auto &e : entries_) {
		total += e.value.size();
	}
	return total;
}

std::vector<NodeId> ParameterSet::bind(Graph &graph) const {
	std::vector<NodeId> nodes;
	nodes.reserve(entries_.size());
	for (std::size_t i = 0; i < entries_.size(); ++i) {
		nodes.push_back(graph.parameter(i, entries_[i].value));
	}
	return nodes;
}

} // namespace qdl
