#pragma once

#include "qdl/graph.hpp"
#include "qdl/parameters.hpp"
#include "qdl/rng.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace qdl {

enum class Family { Lstm, BdLstm, EdLstm, ConvLstm, Linear };
enum class Strategy { Univariate, Multivariate };

// Grouped: one flat output block per sample, horizon-major
//   [h1q1 .. h1qK, h2q1 .. h2qK, ...]
// VectorBased: a [m, |Q|] block, one quantile vector per horizon.
enum class OutputArrangement { Grouped, VectorBased };

std::string_view family_name(Family family);
Family parse_family(std::string_view name);
std::string_view strategy_name(Strategy strategy);
Strategy parse_strategy(std::string_view name);
std::string_view arrangement_name(OutputArrangement arrangement);
OutputArrangement parse_arrangement(std::string_view name);

std::vector<double> default_quantiles();

// Throws InvalidQuantile for levels outside (0,1) and ConfigError when the
// list is empty or not strictly increasing.
void validate_quantiles(const std::vector<double> &quantiles);

struct ModelSpec {
	Family family = Family::EdLstm;
	std::size_t features = 1;
	std::size_t window = 6;
	std::size_t horizons = 5;
	std::size_t hidden1 = 100;
	std::size_t hidden2 = 100;
	std::size_t conv_filters = 64;
	std::size_t conv_kernel = 2;
	std::vector<double> quantiles{0.5};
	OutputArrangement arrangement = OutputArrangement::VectorBased;

	std::size_t quantile_count() const { return quantiles.size(); }
	void validate() const;

	// Layer sizes used for the cryptocurrency experiments: BD-LSTM 50/50,
	// ED-LSTM 100/100, Conv-LSTM 20/20, LSTM 50/50.
	static ModelSpec reference(Family family, std::size_t features, std::size_t window, std::size_t horizons,
	                           std::vector<double> quantiles);

	friend bool operator==(const ModelSpec &, const ModelSpec &) = default;
};

// Parameter shapes (gate order i, f, g, o inside every 4h block):
//
//   lstm      lstm1.{w_x [f,4h1], w_h [h1,4h1], bias [4h1]}
//             lstm2.{w_x [h1,4h2], w_h [h2,4h2], bias [4h2]}
//             head.{weight [h2, m*K], bias [m*K]}
//   bdlstm    forward.*, backward.* as lstm1 (input f, width h1)
//             lstm2.{w_x [2h1,4h2], ...}, head as lstm
//   edlstm    encoder.* (input f, width h1), decoder.* (input h1, width h2)
//             head.{weight [h2, K], bias [K]} applied at every decoder step
//   convlstm  conv.{kernel [k,1,F] (f = 1) or [k,f,1,F] (f > 1), bias [F]}
//             lstm1.* (input F, width h1), head.{weight [h1, m*K], bias [m*K]}
//   linear    head.{weight [d*f, m*K], bias [m*K]}
//
// K = |Q|, F = conv filters, k = conv kernel size.
std::vector<std::pair<std::string, Shape>> parameter_shapes(const ModelSpec &spec);

struct LstmNodes {
	NodeId w_x;
	NodeId w_h;
	NodeId bias;
	std::size_t hidden;
};

struct LstmState {
	NodeId h;
	NodeId c;
};

// One LSTM update:
//   z = x W_x + h_prev W_h + b,  i, f, o = sigmoid(z_i, z_f, z_o), g = tanh(z_g)
//   c = f * c_prev + i * g,  h = o * tanh(c)
LstmState lstm_cell_step(Graph &graph, const LstmNodes &layer, NodeId x, const LstmState &prev);

// Unrolls a layer over per-step inputs [B, in]; returns per-step hidden
// outputs. The initial state is zero. Repeated input nodes are projected once.
std::vector<NodeId> run_lstm(Graph &graph, const LstmNodes &layer, const std::vector<NodeId> &steps,
                             LstmState *final_state = nullptr);

class Model {
public:
	Model(ModelSpec spec, ParameterSet params);

	// Glorot-uniform weights, zero biases.
	static Model build(const ModelSpec &spec, Rng &rng);

	const ModelSpec &spec() const { return spec_; }
	const ParameterSet &parameters() const { return params_; }
	ParameterSet &parameters() { return params_; }

	// input [B, d, f]. Returns [B, m, K] (vector-based) or [B, m*K] (grouped).
	NodeId forward(Graph &graph, std::span<const NodeId> params, NodeId input) const;

	// Concatenated forward/backward hidden sequence [B, d, 2h1] of a bdlstm.
	Tensor bidirectional_features(const Tensor &windows) const;

	friend bool operator==(const Model &, const Model &) = default;

private:
	NodeId forward_body(Graph &graph, std::span<const NodeId> params, NodeId input,
	                    NodeId *bidirectional = nullptr) const;
	LstmNodes layer(std::span<const NodeId> params, const std::string &prefix, std::size_t hidden) const;
	NodeId param(std::span<const NodeId> params, const std::string &name) const;

	ModelSpec spec_;
	ParameterSet params_;
};

Model build_model(const ModelSpec &spec, Rng &rng);

struct PredictOptions {
	// Clamp predictions at zero; off by default.
	bool clip_nonnegative = false;
};

// windows [B, d, f] -> predictions [B, m, K] regardless of arrangement.
Tensor forward_pass(const Model &model, const Tensor &windows, const PredictOptions &options = {});

} // namespace qdl
