#pragma once

#include "qdl/graph.hpp"
#include "qdl/tensor.hpp"

#include <optional>
#include <string>
#include <vector>

namespace qdl {

// Ordered collection of named trainable tensors. ParamId is the insertion
// index, which doubles as the key into Gradients.
class ParameterSet {
public:
	ParamId add(std::string name, Tensor value);

	std::size_t size() const { return entries_.size(); }
	const std::string &name(ParamId id) const { return entries_.at(id).name; }
	const Tensor &value(ParamId id) const { return entries_.at(id).value; }
	Tensor &value(ParamId id) { return entries_.at(id).value; }
	std::optional<ParamId> find(const std::string &name) const;
	const Tensor &value(const std::string &name) const;
	Tensor &value(const std::string &name);

	// Total number of scalar parameters.
	std::size_t count() const;

	// Registers every parameter on the graph; result[id] is its node.
	std::vector<NodeId> bind(Graph &graph) const;

	friend bool operator==(const ParameterSet &, const ParameterSet &) = default;

private:
	struct Entry {
		std::string name;
		Tensor value;
		friend bool operator==(const Entry &, const Entry &) = default;
	};
	std::vector<Entry> entries_;
};

} // namespace qdl
