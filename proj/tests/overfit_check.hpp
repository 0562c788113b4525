#pragma once

// Overfit-one-pair health check: a single 16x16 pair repeated for every
// step. The early reference is the mean L_sde over the first 10 steps; the
// late value is the mean over the last 100 (single-step L_sde is noisy
// because the diffusion step and noise are redrawn every time).

#include "demsde/training.hpp"

#include <numeric>
#include <vector>

namespace testsupport {

struct OverfitResult
{
	double early = 0.0;
	double late = 0.0;
	std::vector<double> l_sde;

	double ratio() const { return late / early; }
};

inline OverfitResult overfit_one_pair(int steps = 2000, double lr = 1e-3, std::uint64_t seed = 5)
{
	using namespace demsde;
	const HeightGrid tile = synth_terrain(16, 16, 0.5, seed);
	const PatchPair pair = make_pair(tile, 2, parse_mask_preset("M-311"), seed);
	const DenoiserConfig model;
	const DiffusionSchedule sched = make_schedule(50);
	TrainConfig cfg;
	cfg.iterations = steps;
	cfg.batch_size = 1;
	cfg.lr_init = lr;
	cfg.seed = seed;
	auto state = TrainState<float>::fresh(init_params<float>(model, seed), seed);
	OverfitResult r;
	const std::vector<PatchPair> batch{pair};
	for (int s = 0; s < steps; ++s)
		r.l_sde.push_back(train_step(state, batch, sched, model, cfg).l_sde);
	const auto mean = [](auto first, auto last) { return std::accumulate(first, last, 0.0) / double(last - first); };
	r.early = mean(r.l_sde.begin(), r.l_sde.begin() + std::min(10, steps));
	r.late = mean(r.l_sde.end() - std::min(100, steps), r.l_sde.end());
	return r;
}

} // namespace testsupport
