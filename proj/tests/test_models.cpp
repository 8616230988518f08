#include "qdl/checkpoint.hpp"
#include "qdl/error.hpp"
#include "qdl/models.hpp"
#include "qdl/quantile_loss.hpp"
#include "qdl/trainer.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>

using namespace qdl;

namespace {

std::size_t lstm_count(std::size_t in, std::size_t h) {
	return 4 * h * (in + h + 1);
}

// Independent count from the layer wiring.
std::size_t expected_count(Family family, std::size_t f, std::size_t d, std::size_t m, std::size_t k) {
	switch (family) {
	case Family::Lstm: return lstm_count(f, 50) + lstm_count(50, 50) + 50 * m * k + m * k;
	case Family::BdLstm: return 2 * lstm_count(f, 50) + lstm_count(100, 50) + 50 * m * k + m * k;
	case Family::EdLstm: return lstm_count(f, 100) + lstm_count(100, 100) + 100 * k + k;
	case Family::ConvLstm: return 2 * f * 64 + 64 + lstm_count(64, 20) + 20 * m * k + m * k;
	case Family::Linear: return d * f * m * k + m * k;
	}
	return 0;
}

double sigmoid(double x) {
	return 1.0 / (1.0 + std::exp(-x));
}

Model zero_model(const ModelSpec &spec) {
	ParameterSet ps;
	for (auto &[name, shape] : parameter_shapes(spec)) {
		ps.add(name, Tensor::zeros(shape));
	}
	return Model(spec, std::move(ps));
}

} // namespace

TEST_CASE("parameter counts for the reference configurations") {
	const Family families[] = {Family::Lstm, Family::BdLstm, Family::EdLstm, Family::ConvLstm, Family::Linear};
	for (Family family : families) {
		for (std::size_t f : {1u, 6u}) {
			for (std::size_t k : {1u, 5u}) {
				auto q = k == 1 ? std::vector<double>{0.5} : default_quantiles();
				const auto spec = ModelSpec::reference(family, f, 6, 5, q);
				Rng rng(0);
				const auto model = build_model(spec, rng);
				CAPTURE(family_name(family));
				CAPTURE(f);
				CAPTURE(k);
				CHECK(model.parameters().count() == expected_count(family, f, 6, 5, k));
			}
		}
	}
	// Spot values worked out by hand.
	CHECK(expected_count(Family::EdLstm, 6, 6, 5, 5) == 123705);
	CHECK(expected_count(Family::Lstm, 1, 6, 5, 1) == 10400 + 20200 + 255);
}

TEST_CASE("lstm cell closed forms") {
	const std::size_t h = 3;
	ParameterSet ps;
	ps.add("w_x", Tensor::zeros({2, 4 * h}));
	ps.add("w_h", Tensor::zeros({h, 4 * h}));
	ps.add("bias", Tensor::zeros({4 * h}));
	Graph g;
	const auto p = ps.bind(g);
	const LstmNodes layer{p[0], p[1], p[2], h};
	const auto x = g.constant(Tensor::matrix({{0.7, -2.0}}));
	const auto h0 = g.constant(Tensor::matrix({{0.1, 0.2, 0.3}}));
	const auto c0 = g.constant(Tensor::matrix({{-1.0, 0.0, 2.0}}));
	const auto s = lstm_cell_step(g, layer, x, {h0, c0});
	const auto &hv = g.value(s.h);
	for (std::size_t i = 0; i < h; ++i) {
		const double c = g.value(c0)[i];
		CHECK(hv[i] == doctest::Approx(0.5 * std::tanh(0.5 * c)).epsilon(1e-15));
	}
	CHECK(hv[1] == 0.0);
}

TEST_CASE("lstm cell matches a straight-line step") {
	Rng rng(3);
	const std::size_t h = 2, in = 2;
	const auto wx = Tensor::standard_normal({in, 4 * h}, rng);
	const auto wh = Tensor::standard_normal({h, 4 * h}, rng);
	const auto b = Tensor::standard_normal({4 * h}, rng);
	const auto hp = Tensor::standard_normal({1, h}, rng);
	const auto cp = Tensor::standard_normal({1, h}, rng);
	const double x[2] = {1.0, -1.0};

	double hn[2], cn[2];
	for (std::size_t u = 0; u < h; ++u) {
		double z[4];
		for (std::size_t gate = 0; gate < 4; ++gate) {
			const std::size_t col = gate * h + u;
			z[gate] = b[col] + x[0] * wx[col] + x[1] * wx[4 * h + col] + hp[0] * wh[col] + hp[1] * wh[4 * h + col];
		}
		cn[u] = sigmoid(z[1]) * cp[u] + sigmoid(z[0]) * std::tanh(z[2]);
		hn[u] = sigmoid(z[3]) * std::tanh(cn[u]);
	}

	ParameterSet ps;
	ps.add("w_x", wx);
	ps.add("w_h", wh);
	ps.add("bias", b);
	Graph g;
	const auto p = ps.bind(g);
	const auto s = lstm_cell_step(g, {p[0], p[1], p[2], h}, g.constant(Tensor::matrix({{1.0, -1.0}})),
	                              {g.constant(hp), g.constant(cp)});
	for (std::size_t u = 0; u < h; ++u) {
		CHECK(g.value(s.h)[u] == doctest::Approx(hn[u]).epsilon(1e-14));
		CHECK(g.value(s.c)[u] == doctest::Approx(cn[u]).epsilon(1e-14));
	}
}

TEST_CASE("output shapes") {
	Rng rng(4);
	const auto spec = ModelSpec::reference(Family::EdLstm, 6, 6, 5, default_quantiles());
	const auto model = build_model(spec, rng);
	const auto x = Tensor::standard_normal({3, 6, 6}, rng);
	CHECK(forward_pass(model, x).shape() == Shape{3, 5, 5});

	auto grouped = spec;
	grouped.arrangement = OutputArrangement::Grouped;
	Rng r2(4);
	const auto gm = build_model(grouped, r2);
	Graph g;
	const auto p = gm.parameters().bind(g);
	CHECK(g.value(gm.forward(g, p, g.constant(x))).shape() == Shape{3, 25});
}

TEST_CASE("bidirectional representation") {
	Rng rng(5);
	auto spec = ModelSpec::reference(Family::BdLstm, 2, 6, 5, {0.5});
	const auto model = build_model(spec, rng);
	const auto x = Tensor::standard_normal({2, 6, 2}, rng);
	const auto feats = model.bidirectional_features(x);
	CHECK(feats.shape() == Shape{2, 6, 100});

	// Swap the forward/backward blocks and mirror the window in time.
	ParameterSet swapped;
	for (ParamId id = 0; id < model.parameters().size(); ++id) {
		const std::string name = model.parameters().name(id);
		std::string source = name;
		if (name.starts_with("forward.")) {
			source = "backward." + name.substr(8);
		} else if (name.starts_with("backward.")) {
			source = "forward." + name.substr(9);
		}
		swapped.add(name, model.parameters().value(source));
	}
	const Model mirror(spec, swapped);
	Graph g;
	const auto xr = g.value(g.reverse_time(g.constant(x)));
	const auto mf = mirror.bidirectional_features(xr);
	const std::size_t d = 6, h = 50;
	for (std::size_t b = 0; b < 2; ++b) {
		for (std::size_t t = 0; t < d; ++t) {
			for (std::size_t u = 0; u < h; ++u) {
				CHECK(mf.at({b, t, u}) == doctest::Approx(feats.at({b, d - 1 - t, h + u})).epsilon(1e-13));
				CHECK(mf.at({b, t, h + u}) == doctest::Approx(feats.at({b, d - 1 - t, u})).epsilon(1e-13));
			}
		}
	}
}

TEST_CASE("conv output length is d - kernel + 1") {
	Rng rng(6);
	const auto spec = ModelSpec::reference(Family::ConvLstm, 1, 6, 5, {0.5});
	const auto model = build_model(spec, rng);
	Graph g;
	const auto x = g.constant(Tensor::standard_normal({1, 6, 1}, rng));
	const auto k = g.constant(model.parameters().value("conv.kernel"));
	CHECK(g.value(g.conv1d(x, k)).shape() == Shape{1, 5, 64});

	const auto spec2 = ModelSpec::reference(Family::ConvLstm, 6, 6, 5, {0.5});
	Rng r2(6);
	const auto m2 = build_model(spec2, r2);
	CHECK(m2.parameters().value("conv.kernel").shape() == Shape{2, 6, 1, 64});
	CHECK(forward_pass(m2, Tensor::zeros({2, 6, 6})).shape() == Shape{2, 5, 1});
}

TEST_CASE("encoder-decoder horizon changes no parameter shape") {
	auto a = ModelSpec::reference(Family::EdLstm, 1, 5, 2, default_quantiles());
	auto b = a;
	b.horizons = 7;
	CHECK(parameter_shapes(a) == parameter_shapes(b));
	Rng rng(1);
	const auto model = build_model(a, rng);
	const Model longer(b, model.parameters());
	const auto x = Tensor::constant({1, 5, 1}, 0.3);
	const auto pa = forward_pass(model, x);
	const auto pb = forward_pass(longer, x);
	CHECK(pb.shape() == Shape{1, 7, 5});
	for (std::size_t i = 0; i < pa.size(); ++i) {
		CHECK(pa[i] == pb[i]);
	}
}

TEST_CASE("zero weights give the head bias") {
	for (Family family : {Family::Lstm, Family::BdLstm, Family::EdLstm, Family::ConvLstm, Family::Linear}) {
		auto spec = ModelSpec::reference(family, 2, 6, 3, {0.25, 0.5, 0.75});
		Model model = zero_model(spec);
		auto &bias = model.parameters().value("head.bias");
		for (std::size_t i = 0; i < bias.size(); ++i) {
			bias[i] = 0.1 * static_cast<double>(i) - 0.3;
		}
		Rng rng(2);
		const auto out = forward_pass(model, Tensor::standard_normal({4, 6, 2}, rng));
		const std::size_t cells = 3 * 3;
		for (std::size_t b = 0; b < 4; ++b) {
			for (std::size_t c = 0; c < cells; ++c) {
				const double expect = family == Family::EdLstm ? bias[c % 3] : bias[c];
				CHECK(out[b * cells + c] == doctest::Approx(expect).epsilon(1e-15));
			}
		}
	}
}

TEST_CASE("rows are independent of the batch") {
	Rng rng(7);
	for (Family family : {Family::Lstm, Family::BdLstm, Family::EdLstm, Family::ConvLstm, Family::Linear}) {
		const auto spec = ModelSpec::reference(family, 1, 6, 5, default_quantiles());
		const auto model = build_model(spec, rng);
		const auto one = Tensor::standard_normal({1, 6, 1}, rng);
		std::vector<double> rep;
		for (int i = 0; i < 8; ++i) {
			rep.insert(rep.end(), one.values().begin(), one.values().end());
		}
		const auto a = forward_pass(model, one);
		const auto b = forward_pass(model, Tensor({8, 6, 1}, rep));
		for (std::size_t r = 0; r < 8; ++r) {
			for (std::size_t i = 0; i < a.size(); ++i) {
				CHECK(b[r * a.size() + i] == doctest::Approx(a[i]).epsilon(1e-14));
			}
		}
	}
}

TEST_CASE("a toy model learns a constant series") {
	const double c = 0.37;
	ModelSpec spec;
	spec.family = Family::Lstm;
	spec.window = 4;
	spec.horizons = 3;
	spec.hidden1 = spec.hidden2 = 4;
	Rng rng(8);
	Model model = build_model(spec, rng);
	const auto x = Tensor::constant({16, 4, 1}, c);
	const auto y = Tensor::constant({16, 3}, c);
	AdamConfig cfg;
	cfg.learning_rate = 0.02;
	auto state = AdamState::for_parameters(model.parameters(), cfg);
	for (int step = 0; step < 200; ++step) {
		Graph g;
		const auto p = model.parameters().bind(g);
		const auto loss = mse_loss_node(g, model.forward(g, p, g.constant(x)), y);
		adam_step(model.parameters(), g.backward(loss), state);
	}
	const auto pred = forward_pass(model, Tensor::constant({1, 4, 1}, c));
	for (double v : pred.values()) {
		CHECK(std::abs(v - c) < 1e-2);
	}
}

TEST_CASE("non-finite output names the layer") {
	Rng rng(9);
	auto spec = ModelSpec::reference(Family::Lstm, 1, 6, 5, {0.5});
	Model model = build_model(spec, rng);
	// Column 0 of the head sums three saturated units times 1e308.
	for (std::size_t unit = 0; unit < 3; ++unit) {
		model.parameters().value("head.weight")[unit * 5] = 1e308;
	}
	auto x = Tensor::constant({1, 6, 1}, 1.0);
	try {
		model.parameters().value("lstm2.bias") = Tensor::constant({200}, 50.0);
		forward_pass(model, x);
		FAIL("expected NumericalError");
	} catch (const NumericalError &e) {
		CHECK(std::string(e.what()).find("head") != std::string::npos);
	}
}

TEST_CASE("spec validation") {
	CHECK_THROWS_AS(parse_family("transformer"), ConfigError);
	ModelSpec spec;
	spec.quantiles = {0.5, 0.25};
	CHECK_THROWS_AS(spec.validate(), ConfigError);
	spec.quantiles = {0.0, 0.5};
	CHECK_THROWS_AS(spec.validate(), InvalidQuantile);
	spec.quantiles = {0.5};
	spec.window = 1;
	CHECK_THROWS(spec.validate());
	CHECK_THROWS_AS(Model(ModelSpec{}, ParameterSet{}), ConfigError);
}

TEST_CASE("checkpoint round trip is bit-exact") {
	Rng rng(10);
	for (Family family : {Family::Lstm, Family::BdLstm, Family::EdLstm, Family::ConvLstm, Family::Linear}) {
		const auto spec = ModelSpec::reference(family, 3, 6, 5, default_quantiles());
		const auto model = build_model(spec, rng);
		const auto path = std::filesystem::temp_directory_path() / "qdl_ckpt_test.json";
		save_model(path, model);
		const auto loaded = load_model(path);
		CHECK(loaded == model);
		std::filesystem::remove(path);
	}
	for (double v : {0.1, -0.0, 1e-310, 3.141592653589793, 1e300}) {
		const double back = decode_double(encode_double(v));
		CHECK(std::memcmp(&back, &v, sizeof v) == 0);
	}
}
