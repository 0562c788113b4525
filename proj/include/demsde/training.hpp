#pragma once

#include "demsde/degrade.hpp"
#include "demsde/denoiser.hpp"

#include <filesystem>
#include <functional>
#include <random>
#include <vector>

namespace demsde {

struct TrainConfig
{
	int iterations = 2000;
	int batch_size = 4;
	double lr_init = 5e-4;
	/// cosine decay floor reached at the final iteration
	double lr_min = 1e-6;
	double beta1 = 0.9;
	double beta2 = 0.999;
	double eps = 1e-8;
	double weight_decay = 0.0;
	/// per-step loss weights gamma_1..gamma_T; empty means all ones
	std::vector<double> gamma;
	double edge_weight = 0.01;
	std::uint64_t seed = 0;
	int scale = 2;
	std::string mask_preset = "M-311";
	/// 0 disables periodic checkpoints / validation
	int checkpoint_every = 0;
	int validate_every = 0;
	int validation_tiles = 4;
	/// worker threads for per-item forward/backward; results do not depend on it
	int threads = 1;

	/// Reference optimizer settings (lr 4e-5, batch 4, edge weight 1).
	static TrainConfig reference();
	/// As reference() with the void-filling variant's beta2 = 0.5.
	static TrainConfig reference_voids();

	void validate(int T) const;
	double gamma_at(int i) const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Cosine decay from lr_init at step 0 to lr_min at step iterations-1.
double learning_rate(const TrainConfig& cfg, std::int64_t step);

template <typename Scalar>
struct TrainState
{
	nn::ParamStore<Scalar> params;
	nn::ParamStore<Scalar> m;
	nn::ParamStore<Scalar> v;
	std::int64_t step = 0;
	std::mt19937_64 rng;

	static TrainState fresh(nn::ParamStore<Scalar> params, std::uint64_t seed);
};

struct StepReport
{
	std::int64_t step = 0;
	double l_sde = 0.0;
	double l_edge = 0.0;
	double loss = 0.0;
	double lr = 0.0;
};

/// gamma * mean |noise_hat - noise_true|
template <typename DA, typename DB>
double sde_loss(const Eigen::ArrayBase<DA>& noise_hat, const Eigen::ArrayBase<DB>& noise_true, double gamma)
{
	if (noise_hat.rows() != noise_true.rows() || noise_hat.cols() != noise_true.cols())
		throw Error(ErrorCode::DimMismatch, "sde_loss operands differ in shape");
	if (noise_hat.size() == 0)
		return 0.0;
	return gamma * (noise_hat.derived().template cast<double>() - noise_true.derived().template cast<double>()).abs().mean();
}

/// Squared forward-difference mismatch averaged over all
/// rows*(cols-1) + (rows-1)*cols difference pairs.
double grad_loss(const Eigen::ArrayXXd& h_hat, const Eigen::ArrayXXd& h_gt);

/// d grad_loss / d h_hat.
Eigen::ArrayXXd grad_loss_gradient(const Eigen::ArrayXXd& h_hat, const Eigen::ArrayXXd& h_gt);

/// One optimizer step on a batch of pairs; updates state in place.
/// Throws NonFiniteLoss if the loss or any gradient is not finite.
template <typename Scalar>
StepReport train_step(TrainState<Scalar>& state, const std::vector<PatchPair>& batch, const DiffusionSchedule& sched,
	const DenoiserConfig& model, const TrainConfig& cfg);

/// AdamW with decoupled weight decay and bias correction.
template <typename Scalar>
void adamw_update(TrainState<Scalar>& state, const nn::ParamStore<Scalar>& grads, const TrainConfig& cfg, double lr);

struct TrainOutputs
{
	/// written when non-empty: loss.csv, validation.csv, ckpt_<step>.bin, model.ckpt
	std::filesystem::path dir;
	std::function<void(const StepReport&)> on_step;
};

struct TrainResult
{
	Checkpoint checkpoint;
	std::vector<StepReport> losses;
};

/// Draws whole tiles from a per-epoch shuffle, degrades each draw with a
/// fresh void mask and runs `iterations` train steps.
TrainResult train(const TileSet& train_tiles, const TileSet& val_tiles, const DiffusionSchedule& sched,
	const DenoiserConfig& model, const TrainConfig& cfg, const TrainOutputs& out = {});

void write_loss_csv(const std::vector<StepReport>& rows, const std::filesystem::path& path);

extern template struct TrainState<float>;
extern template struct TrainState<double>;

} // namespace demsde
