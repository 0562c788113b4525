#include "demsde/sampling.hpp"
#include "demsde/degrade.hpp"

#include <cmath>
#include <thread>

namespace demsde {

SamplerMode parse_sampler_mode(const std::string& name)
{
	if (name == "optimal_state" || name == "optimal")
		return SamplerMode::OptimalState;
	if (name == "euler_sde" || name == "euler")
		return SamplerMode::EulerSde;
	throw Error(ErrorCode::BadParam, "unknown sampler mode '" + name + "'");
}

std::string sampler_mode_name(SamplerMode mode)
{
	return mode == SamplerMode::OptimalState ? "optimal_state" : "euler_sde";
}

nlohmann::json to_json(const SamplerConfig& cfg)
{
	return {{"T", cfg.T}, {"mode", sampler_mode_name(cfg.mode)}, {"stochastic", cfg.stochastic}, {"seed", cfg.seed},
		{"scale", cfg.scale}, {"threads", cfg.threads}};
}

namespace {

Eigen::ArrayXXd gaussian_field(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng)
{
	std::normal_distribution<double> n01;
	Eigen::ArrayXXd out(rows, cols);
	for (Eigen::Index k = 0; k < out.size(); ++k)
		out.data()[k] = n01(rng);
	return out;
}

} // namespace

Eigen::ArrayXXd reverse_pass_from(Eigen::ArrayXXd x, const Eigen::ArrayXXd& mu, const NoiseFn& noise,
	const DiffusionSchedule& sched, const SamplerConfig& cfg, std::mt19937_64& rng)
{
	const double lam2 = sched.lambda() * sched.lambda();
	for (int i = sched.steps(); i >= 1; --i) {
		const Eigen::ArrayXXd eps = noise(x, i);
		if (eps.rows() != x.rows() || eps.cols() != x.cols())
			throw Error(ErrorCode::DimMismatch, "noise estimate has the wrong shape");
		if (cfg.mode == SamplerMode::OptimalState) {
			const Eigen::ArrayXXd x0_hat = x0_from_noise(x, eps, mu, sched, i);
			Eigen::ArrayXXd next = optimal_reverse_state(x, x0_hat, mu, sched, i);
			if (cfg.stochastic && i > 1) {
				// posterior variance of x_{i-1} given x_i and x_0
				const double a = std::exp(-sched.dtheta(i));
				const double b = std::exp(-sched.theta_bar(i - 1));
				const double post = lam2 * (1.0 - a * a) * (1.0 - b * b) / (1.0 - a * a * b * b);
				next += std::sqrt(post) * gaussian_field(x.rows(), x.cols(), rng);
			}
			x = std::move(next);
		} else {
			const Eigen::ArrayXXd score = score_from_noise(eps, sched, i);
			const Eigen::ArrayXXd z = (cfg.stochastic && i > 1) ? gaussian_field(x.rows(), x.cols(), rng)
																 : Eigen::ArrayXXd::Zero(x.rows(), x.cols()).eval();
			x = reverse_euler_step(x, mu, score, sched, i, z);
		}
		if (!x.allFinite())
			throw Error(ErrorCode::NonFiniteState, "reverse trajectory became non-finite at step " + std::to_string(i));
	}
	return x;
}

Eigen::ArrayXXd reverse_pass(
	const Eigen::ArrayXXd& mu, const NoiseFn& noise, const DiffusionSchedule& sched, const SamplerConfig& cfg)
{
	std::mt19937_64 rng(cfg.seed);
	Eigen::ArrayXXd x = mu + sched.lambda() * gaussian_field(mu.rows(), mu.cols(), rng);
	return reverse_pass_from(std::move(x), mu, noise, sched, cfg, rng);
}

template <typename Scalar>
HeightGrid restore(const HeightGrid& d_lq, const NoisePredictor<Scalar>& model, int scale,
	const DiffusionSchedule& sched, const SamplerConfig& cfg)
{
	if (scale < 1)
		throw Error(ErrorCode::BadParam, "scale must be >= 1");
	const NormalizedPatch v = normalize(d_lq);
	const Eigen::ArrayXXd mu = scale == 1 ? v.values : upsample_bicubic(v.values, scale);
	check_input_shape(model.config(), mu.rows(), mu.cols());
	NoiseFn noise = [&](const Eigen::ArrayXXd& x, int i) { return model.predict_lifted(x, mu, mu, i); };
	NormalizedPatch out;
	out.values = reverse_pass(mu, noise, sched, cfg);
	out.valid = MaskArray::Constant(out.values.rows(), out.values.cols(), true);
	out.record = v.record;
	out.cell_size = d_lq.cell_size / scale;
	return denormalize(out);
}

DiffusionSchedule sampling_schedule(const Checkpoint& model, const SamplerConfig& cfg)
{
	if (cfg.T != 0 && cfg.T != model.schedule.steps())
		throw Error(ErrorCode::SchedMismatch, "sampler T=" + std::to_string(cfg.T) + " but the model was trained with T=" +
												  std::to_string(model.schedule.steps()));
	return model.schedule;
}

int checkpoint_scale(const Checkpoint& model, const SamplerConfig& cfg)
{
	const int recorded = model.meta.value("scale", 0);
	if (cfg.scale != 0) {
		if (recorded != 0 && recorded != cfg.scale)
			throw Error(ErrorCode::BadParam, "scale " + std::to_string(cfg.scale) + " differs from the trained scale " +
												 std::to_string(recorded));
		return cfg.scale;
	}
	if (recorded == 0)
		throw Error(ErrorCode::BadParam, "checkpoint records no scale; pass one explicitly");
	return recorded;
}

HeightGrid restore(const HeightGrid& d_lq, const Checkpoint& model, const DiffusionSchedule& sched,
	const SamplerConfig& cfg)
{
	if (!(sched == sampling_schedule(model, cfg)))
		throw Error(ErrorCode::SchedMismatch, "schedule differs from the one stored in the checkpoint");
	NoisePredictor<float> net(model.config, model.params.cast<float>());
	return restore(d_lq, net, checkpoint_scale(model, cfg), sched, cfg);
}

std::uint64_t tile_seed(std::uint64_t seed, std::size_t k)
{
	// splitmix64 finalizer over (seed, k)
	std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(k) + 1);
	z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
	z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
	return z ^ (z >> 31);
}

void restore_stream(std::size_t count, const std::function<HeightGrid(std::size_t)>& source,
	const std::function<void(std::size_t, HeightGrid)>& sink, const Checkpoint& model, const DiffusionSchedule& sched,
	const SamplerConfig& cfg)
{
	if (count == 0)
		return;
	if (!(sched == sampling_schedule(model, cfg)))
		throw Error(ErrorCode::SchedMismatch, "schedule differs from the one stored in the checkpoint");
	const NoisePredictor<float> net(model.config, model.params.cast<float>());
	const int scale = checkpoint_scale(model, cfg);
	const std::size_t workers = static_cast<std::size_t>(std::max(1, cfg.threads));

	auto one = [&](std::size_t k, const HeightGrid& lq) {
		SamplerConfig c = cfg;
		c.seed = tile_seed(cfg.seed, k);
		return restore(lq, net, scale, sched, c);
	};

	for (std::size_t start = 0; start < count; start += workers) {
		const std::size_t n = std::min(workers, count - start);
		std::vector<HeightGrid> inputs;
		for (std::size_t j = 0; j < n; ++j)
			inputs.push_back(source(start + j));
		std::vector<HeightGrid> results(n);
		if (n == 1) {
			results[0] = one(start, inputs[0]);
		} else {
			std::vector<std::exception_ptr> errors(n);
			std::vector<std::thread> pool;
			for (std::size_t j = 0; j < n; ++j)
				pool.emplace_back([&, j] {
					try {
						results[j] = one(start + j, inputs[j]);
					} catch (...) {
						errors[j] = std::current_exception();
					}
				});
			for (auto& t : pool)
				t.join();
			for (auto& e : errors)
				if (e)
					std::rethrow_exception(e);
		}
		for (std::size_t j = 0; j < n; ++j)
			sink(start + j, std::move(results[j]));
	}
}

TileSet restore_batch(const TileSet& tiles, const Checkpoint& model, const DiffusionSchedule& sched,
	const SamplerConfig& cfg)
{
	TileSet out;
	out.source_index = tiles.source_index;
	out.split_seed = tiles.split_seed;
	if (tiles.empty())
		return out;
	for (const auto& t : tiles.tiles)
		if (t.rows() != tiles.tiles.front().rows() || t.cols() != tiles.tiles.front().cols())
			throw Error(ErrorCode::DimMismatch, "restore_batch needs uniform tile dimensions");
	out.tiles.resize(tiles.size());
	restore_stream(
		tiles.size(), [&](std::size_t k) { return tiles.tiles[k]; },
		[&](std::size_t k, HeightGrid g) { out.tiles[k] = std::move(g); }, model, sched, cfg);
	out.tile_rows = out.tiles.front().rows();
	out.tile_cols = out.tiles.front().cols();
	return out;
}

template HeightGrid restore<float>(
	const HeightGrid&, const NoisePredictor<float>&, int, const DiffusionSchedule&, const SamplerConfig&);
template HeightGrid restore<double>(
	const HeightGrid&, const NoisePredictor<double>&, int, const DiffusionSchedule&, const SamplerConfig&);

} // namespace demsde
