#include "qdl/checkpoint.hpp"

#include "qdl/error.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>

namespace qdl {

using nlohmann::json;

namespace {

constexpr const char *kFormat = "qdl-checkpoint";
constexpr int kVersion = 1;

json doubles_to_json(std::span<const double> values) {
	json arr = json::array();
	for (double v : values) {
		arr.push_back(encode_double(v));
	}
	return arr;
}

std::vector<double> doubles_from_json(const json &arr) {
	std::vector<double> out;
	out.reserve(arr.size());
	for (const auto &v : arr) {
		out.push_back(decode_double(v.get<std::string>()));
	}
	return out;
}

void write_json(const std::filesystem::path &path, const json &doc) {
	if (path.has_parent_path()) {
		std::filesystem::create_directories(path.parent_path());
	}
	std::ofstream out(path);
	if (!out) {
		throw IoError("cannot write '" + path.string() + "'");
	}
	out << doc.dump(1) << '\n';
	if (!out) {
		throw IoError("failed writing '" + path.string() + "'");
	}
}

json read_json(const std::filesystem::path &path) {
	std::ifstream in(path);
	if (!in) {
		throw IoError("cannot open '" + path.string() + "'");
	}
	try {
		json doc = json::parse(in);
		if (doc.value("format", "") != kFormat) {
			throw ParseError("'" + path.string() + "' is not a qdl checkpoint");
		}
		if (doc.value("version", 0) != kVersion) {
			throw ParseError("'" + path.string() + "' has unsupported version");
		}
		return doc;
	} catch (const json::exception &e) {
		throw ParseError("'" + path.string() + "': " + e.what());
	}
}

} // namespace

std::string encode_double(double value) {
	char buf[64];
	std::snprintf(buf, sizeof buf, "%a", value);
	return buf;
}

double decode_double(const std::string &text) {
	char *end = nullptr;
	const double v = std::strtod(text.c_str(), &end);
	if (end == text.c_str() || *end != '\0') {
		throw ParseError("bad float literal '" + text + "'");
	}
	return v;
}

json tensor_to_json(const Tensor &tensor) {
	return json{{"shape", tensor.shape()}, {"data", doubles_to_json(tensor.data())}};
}

Tensor tensor_from_json(const json &j) {
	return Tensor(j.at("shape").get<Shape>(), doubles_from_json(j.at("data")));
}

json spec_to_json(const ModelSpec &spec) {
	return json{
	    {"family", std::string(family_name(spec.family))},
	    {"features", spec.features},
	    {"window", spec.window},
	    {"horizons", spec.horizons},
	    {"hidden1", spec.hidden1},
	    {"hidden2", spec.hidden2},
	    {"conv_filters", spec.conv_filters},
	    {"conv_kernel", spec.conv_kernel},
	    {"quantiles", doubles_to_json(spec.quantiles)},
	    {"arrangement", std::string(arrangement_name(spec.arrangement))},
	};
}

ModelSpec spec_from_json(const json &j) {
	ModelSpec spec;
	spec.family = parse_family(j.at("family").get<std::string>());
	spec.features = j.at("features").get<std::size_t>();
	spec.window = j.at("window").get<std::size_t>();
	spec.horizons = j.at("horizons").get<std::size_t>();
	spec.hidden1 = j.at("hidden1").get<std::size_t>();
	spec.hidden2 = j.at("hidden2").get<std::size_t>();
	spec.conv_filters = j.at("conv_filters").get<std::size_t>();
	spec.conv_kernel = j.at("conv_kernel").get<std::size_t>();
	spec.quantiles = doubles_from_json(j.at("quantiles"));
	spec.arrangement = parse_arrangement(j.at("arrangement").get<std::string>());
	spec.validate();
	return spec;
}

json model_to_json(const Model &model) {
	json params = json::array();
	const auto &set = model.parameters();
	for (ParamId id = 0; id < set.size(); ++id) {
		json entry = tensor_to_json(set.value(id));
		entry["name"] = set.name(id);
		params.push_back(std::move(entry));
	}
	return json{{"format", kFormat}, {"version", kVersion}, {"spec", spec_to_json(model.spec())}, {"parameters", params}};
}

Model model_from_json(const json &j) {
	try {
		ParameterSet params;
		for (const auto &entry : j.at("parameters")) {
			params.add(entry.at("name").get<std::string>(), tensor_from_json(entry));
		}
		return Model(spec_from_json(j.at("spec")), std::move(params));
	} catch (const json::exception &e) {
		throw ParseError(std::string("checkpoint: ") + e.what());
	}
}

void save_model(const std::filesystem::path &path, const Model &model) {
	write_json(path, model_to_json(model));
}

Model load_model(const std::filesystem::path &path) {
	return model_from_json(read_json(path));
}

void save_trainer_state(const std::filesystem::path &path, const TrainerState &state) {
	json doc = model_to_json(state.model);
	json first = json::array();
	json second = json::array();
	for (std::size_t i = 0; i < state.adam.first_moment.size(); ++i) {
		first.push_back(tensor_to_json(state.adam.first_moment[i]));
		second.push_back(tensor_to_json(state.adam.second_moment[i]));
	}
	json rng = json::array();
	for (auto word : state.shuffle_state) {
		rng.push_back(std::to_string(word));
	}
	doc["trainer"] = json{
	    {"epoch", state.epoch},
	    {"loss_trace", doubles_to_json(state.loss_trace)},
	    {"shuffle_state", rng},
	    {"adam",
	     {{"learning_rate", encode_double(state.adam.config.learning_rate)},
	      {"beta1", encode_double(state.adam.config.beta1)},
	      {"beta2", encode_double(state.adam.config.beta2)},
	      {"epsilon", encode_double(state.adam.config.epsilon)},
	      {"step", state.adam.step},
	      {"first_moment", first},
	      {"second_moment", second}}},
	};
	write_json(path, doc);
}

TrainerState load_trainer_state(const std::filesystem::path &path) {
	const json doc = read_json(path);
	if (!doc.contains("trainer")) {
		throw ParseError("'" + path.string() + "' holds no trainer state");
	}
	try {
		const json &t = doc.at("trainer");
		const json &adam = t.at("adam");
		AdamState state;
		state.config.learning_rate = decode_double(adam.at("learning_rate").get<std::string>());
		state.config.beta1 = decode_double(adam.at("beta1").get<std::string>());
		state.config.beta2 = decode_double(adam.at("beta2").get<std::string>());
		state.config.epsilon = decode_double(adam.at("epsilon").get<std::string>());
		state.step = adam.at("step").get<std::uint64_t>();
		for (const auto &m : adam.at("first_moment")) {
			state.first_moment.push_back(tensor_from_json(m));
		}
		for (const auto &v : adam.at("second_moment")) {
			state.second_moment.push_back(tensor_from_json(v));
		}
		Rng::State rng{};
		for (std::size_t i = 0; i < rng.size(); ++i) {
			rng[i] = std::stoull(t.at("shuffle_state").at(i).get<std::string>());
		}
		return TrainerState{model_from_json(doc), std::move(state), rng, t.at("epoch").get<std::size_t>(),
		                    doubles_from_json(t.at("loss_trace"))};
	} catch (const json::exception &e) {
		throw ParseError("'" + path.string() + "': " + e.what());
	}
}

} // namespace qdl
