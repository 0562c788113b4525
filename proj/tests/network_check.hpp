#pragma once

// Whole-network gradient check shared by the unit tests and the acceptance
// binary: random parameters, random 16x16 inputs, sampled per layer class.

#include "demsde/denoiser.hpp"
#include "gradcheck.hpp"

#include <map>
#include <random>
#include <string>
#include <vector>

namespace testsupport {

struct NetworkGradCase
{
	demsde::DenoiserConfig config;
	demsde::nn::ParamStore<double> params;
	demsde::nn::Tensor<double> x_t, lifted, mu;
	int step = 7;

	BuildFn build() const
	{
		return [this](demsde::nn::Graph<double>& g, const demsde::nn::ParamStore<double>& p) {
			return demsde::predict_noise(g, p, config, x_t, lifted, mu, step);
		};
	}

	std::map<std::string, std::vector<std::string>> layer_classes() const
	{
		std::map<std::string, std::vector<std::string>> groups;
		for (const auto& spec : demsde::param_layout(config))
			groups[spec.layer_class].push_back(spec.name);
		return groups;
	}
};

inline demsde::nn::Tensor<double> uniform_tensor(int c, int h, int w, std::mt19937_64& rng, double lo, double hi)
{
	std::uniform_real_distribution<double> u(lo, hi);
	demsde::nn::Tensor<double> t(c, h, w);
	for (Eigen::Index k = 0; k < t.data.size(); ++k)
		t.data.data()[k] = u(rng);
	return t;
}

inline NetworkGradCase make_network_case(const demsde::DenoiserConfig& cfg, int side, std::uint64_t seed,
	double param_scale = 0.3)
{
	NetworkGradCase c;
	c.config = cfg;
	c.params = demsde::init_params<double>(cfg, seed);
	demsde::randomize_params(c.params, seed + 1, param_scale);
	std::mt19937_64 rng(seed + 2);
	c.mu = uniform_tensor(1, side, side, rng, 0.0, 1.0);
	c.lifted = c.mu;
	c.x_t = c.mu;
	c.x_t.data += uniform_tensor(1, side, side, rng, -0.3, 0.3).data;
	return c;
}

} // namespace testsupport
