#pragma once

#include "demsde/denoiser.hpp"
#include "demsde/raster.hpp"

#include <functional>
#include <random>

namespace demsde {

enum class SamplerMode
{
	OptimalState,
	EulerSde,
};

SamplerMode parse_sampler_mode(const std::string& name);
std::string sampler_mode_name(SamplerMode mode);

struct SamplerConfig
{
	/// 0 takes T from the checkpoint schedule
	int T = 0;
	SamplerMode mode = SamplerMode::OptimalState;
	bool stochastic = false;
	std::uint64_t seed = 0;
	/// 0 takes the scale recorded in the checkpoint
	int scale = 0;
	int threads = 1;
};

nlohmann::json to_json(const SamplerConfig& cfg);

/// Noise estimate for state x_i at step i.
using NoiseFn = std::function<Eigen::ArrayXXd(const Eigen::ArrayXXd& x_i, int i)>;

/// Reverse pass in the normalized domain from x_T = mu + lambda * eps down
/// to x_0. Throws NonFiniteState if the trajectory leaves the reals.
Eigen::ArrayXXd reverse_pass(
	const Eigen::ArrayXXd& mu, const NoiseFn& noise, const DiffusionSchedule& sched, const SamplerConfig& cfg);

/// Same, starting from a caller-supplied x_T.
Eigen::ArrayXXd reverse_pass_from(Eigen::ArrayXXd x, const Eigen::ArrayXXd& mu, const NoiseFn& noise,
	const DiffusionSchedule& sched, const SamplerConfig& cfg, std::mt19937_64& rng);

/// Normalizes the voided LQ grid, lifts it to mu, runs the reverse pass
/// with the model and returns the denormalized, fully valid HQ grid.
HeightGrid restore(const HeightGrid& d_lq, const Checkpoint& model, const DiffusionSchedule& sched,
	const SamplerConfig& cfg);

/// Variant reusing an already constructed predictor.
template <typename Scalar>
HeightGrid restore(const HeightGrid& d_lq, const NoisePredictor<Scalar>& model, int scale,
	const DiffusionSchedule& sched, const SamplerConfig& cfg);

/// Seed used for tile k of a batch run with base seed `seed`.
std::uint64_t tile_seed(std::uint64_t seed, std::size_t k);

/// Restores tiles one by one, handing each result to `sink` in order
/// without keeping the set in memory.
void restore_stream(std::size_t count, const std::function<HeightGrid(std::size_t)>& source,
	const std::function<void(std::size_t, HeightGrid)>& sink, const Checkpoint& model, const DiffusionSchedule& sched,
	const SamplerConfig& cfg);

TileSet restore_batch(const TileSet& tiles, const Checkpoint& model, const DiffusionSchedule& sched,
	const SamplerConfig& cfg);

/// Resolves cfg.T against the checkpoint: SchedMismatch if they disagree.
DiffusionSchedule sampling_schedule(const Checkpoint& model, const SamplerConfig& cfg);

int checkpoint_scale(const Checkpoint& model, const SamplerConfig& cfg);

extern template HeightGrid restore<float>(
	const HeightGrid&, const NoisePredictor<float>&, int, const DiffusionSchedule&, const SamplerConfig&);
extern template HeightGrid restore<double>(
	const HeightGrid&, const NoisePredictor<double>&, int, const DiffusionSchedule&, const SamplerConfig&);

} // namespace demsde
