#pragma once

#include "qdl/datapipe.hpp"
#include "qdl/error.hpp"
#include "qdl/models.hpp"
#include "qdl/quantile_loss.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

namespace qdl {

struct AdamConfig {
	double learning_rate = 1e-4;
	double beta1 = 0.9;
	double beta2 = 0.999;
	double epsilon = 1e-8;
};

struct AdamState {
	AdamConfig config;
	std::vector<Tensor> first_moment;
	std::vector<Tensor> second_moment;
	std::uint64_t step = 0;

	static AdamState for_parameters(const ParameterSet &params, const AdamConfig &config = {});

	friend bool operator==(const AdamState &, const AdamState &) = default;
};

// Bias-corrected Adam (Kingma & Ba): theta -= lr * m_hat / (sqrt(v_hat) + eps).
// A non-finite gradient throws NumericalError naming the parameter before
// anything is modified.
void adam_step(ParameterSet &params, const Gradients &grads, AdamState &state);

enum class LossKind { Quantile, Mse };

std::string_view loss_kind_name(LossKind kind);
LossKind parse_loss_kind(std::string_view name);

struct TrainConfig {
	std::size_t epochs = 100;
	std::size_t batch_size = 64;
	std::uint64_t shuffle_seed = 0;
	LossKind loss = LossKind::Quantile;
	std::optional<double> clip_norm;
	AdamConfig adam;
	// Write a resumable checkpoint every k epochs (0 disables).
	std::size_t checkpoint_every = 0;
	std::filesystem::path checkpoint_path;

	void validate() const;
};

// Everything needed to continue a run bit-for-bit.
struct TrainerState {
	Model model;
	AdamState adam;
	Rng::State shuffle_state{};
	std::size_t epoch = 0;
	std::vector<double> loss_trace;
};

class TrainingDiverged : public Error {
public:
	TrainingDiverged(const std::string &what, std::shared_ptr<const TrainerState> last_good)
	    : Error("TrainingDiverged: " + what), last_good_(std::move(last_good)) {}

	// State at the start of the epoch that diverged (null when unavailable).
	const std::shared_ptr<const TrainerState> &last_good() const { return last_good_; }

private:
	std::shared_ptr<const TrainerState> last_good_;
};

struct TrainResult {
	Model model;
	// Mean per-sample training loss of every epoch.
	std::vector<double> loss_trace;
};

TrainerState start_training(Model model, const TrainConfig &config);

// Runs epochs until state.epoch == config.epochs.
void continue_training(TrainerState &state, const WindowedDataset &dataset, const TrainConfig &config);

TrainResult train(Model model, const WindowedDataset &dataset, const TrainConfig &config);

// Loss over the chosen split, accumulated per sample, without touching the
// model. Batches only bound memory; the value does not depend on them.
LossValue loss_eval(const Model &model, const WindowedDataset &dataset, LossKind kind, Split split = Split::Test,
                    std::size_t batch_size = 256);

// Predictions [n, m, K] for the chosen split in index order.
Tensor predict_split(const Model &model, const WindowedDataset &dataset, Split split,
                     const PredictOptions &options = {}, std::size_t batch_size = 256);

// Keeps freed tensor buffers in the heap instead of returning them to the
// OS after every step (glibc only; a no-op elsewhere). Process-wide.
void tune_allocator();

} // namespace qdl
