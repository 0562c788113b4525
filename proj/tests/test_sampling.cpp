#include "demsde/degrade.hpp"
#include "demsde/sampling.hpp"
#include "support.hpp"

#include "doctest.h"

using namespace demsde;

namespace {

// Ground-truth noise for a known clean state: invert the marginal.
NoiseFn oracle_noise(const Eigen::ArrayXXd& x0, const Eigen::ArrayXXd& mu, const DiffusionSchedule& sched)
{
	return [=](const Eigen::ArrayXXd& x, int i) {
		const double decay = std::exp(-sched.theta_bar(i));
		return ((x - (mu + (x0 - mu) * decay)) / std::sqrt(sched.variance(i))).eval();
	};
}

DenoiserConfig tiny_model()
{
	DenoiserConfig cfg;
	cfg.base_channels = 4;
	cfg.tpe_channels = 2;
	cfg.tpe_blocks = 1;
	cfg.depths = 1;
	cfg.encoder_blocks = {1};
	cfg.decoder_blocks = {1};
	cfg.middle_blocks = 0;
	cfg.time_embed_dim = 8;
	return cfg;
}

Checkpoint make_checkpoint(const DenoiserConfig& cfg, int T, std::uint64_t seed, int scale = 2)
{
	Checkpoint ck;
	ck.config = cfg;
	ck.schedule = make_schedule(T);
	ck.params = init_params<double>(cfg, seed);
	randomize_params(ck.params, seed, 0.05);
	ck.meta = {{"scale", scale}};
	return ck;
}

HeightGrid voided_lq(int side, std::uint64_t seed, const std::string& preset = "M-311")
{
	const HeightGrid hq = synth_terrain(side, side, 0.5, seed);
	return denormalize(make_pair(hq, 2, parse_mask_preset(preset), seed).d_lq);
}

} // namespace

TEST_CASE("ground-truth noise recovers the clean patch")
{
	const HeightGrid hq = synth_terrain(32, 32, 0.5, 3);
	const PatchPair pair = make_pair(hq, 2, parse_mask_preset("M-533"), 3);
	for (int T : {10, 50, 100}) {
		const auto sched = make_schedule(T);
		SamplerConfig cfg;
		cfg.seed = 4;
		const auto x0 =
			reverse_pass(pair.mu.values, oracle_noise(pair.d_hq.values, pair.mu.values, sched), sched, cfg);
		CHECK((x0 - pair.d_hq.values).abs().maxCoeff() < 1e-5);
	}
}

TEST_CASE("oracle trajectory from the terminal mean approaches the clean state monotonically")
{
	const auto sched = make_schedule(50);
	std::mt19937_64 rng(1);
	std::uniform_real_distribution<double> u(-1.0, 1.0);
	for (int trial = 0; trial < 50; ++trial) {
		const Eigen::ArrayXXd x0 = Eigen::ArrayXXd::Constant(1, 1, u(rng));
		const Eigen::ArrayXXd mu = Eigen::ArrayXXd::Constant(1, 1, u(rng));
		std::vector<double> err;
		const NoiseFn truth = oracle_noise(x0, mu, sched);
		NoiseFn tracked = [&](const Eigen::ArrayXXd& x, int i) {
			err.push_back(std::abs(x(0, 0) - x0(0, 0)));
			return truth(x, i);
		};
		std::mt19937_64 unused(0);
		const auto out = reverse_pass_from(mu, mu, tracked, sched, SamplerConfig{}, unused);
		err.push_back(std::abs(out(0, 0) - x0(0, 0)));
		for (std::size_t k = 1; k < err.size(); ++k)
			CHECK(err[k] <= err[k - 1] + 1e-12);
		CHECK(err.back() < 1e-12);
	}
}

TEST_CASE("Euler and optimal-state samplers agree for fine schedules")
{
	const auto sched = make_schedule(1000);
	std::mt19937_64 rng(2);
	std::uniform_real_distribution<double> u(-1.0, 1.0);
	double worst = 0.0;
	for (int trial = 0; trial < 20; ++trial) {
		const Eigen::ArrayXXd x0 = Eigen::ArrayXXd::Constant(1, 1, u(rng));
		const Eigen::ArrayXXd mu = Eigen::ArrayXXd::Constant(1, 1, u(rng));
		SamplerConfig opt;
		opt.seed = static_cast<std::uint64_t>(trial);
		SamplerConfig euler = opt;
		euler.mode = SamplerMode::EulerSde;
		const auto a = reverse_pass(mu, oracle_noise(x0, mu, sched), sched, opt);
		const auto b = reverse_pass(mu, oracle_noise(x0, mu, sched), sched, euler);
		worst = std::max(worst, std::abs(a(0, 0) - b(0, 0)));
	}
	CHECK(worst < 1e-2);
}

TEST_CASE("sampler modes parse")
{
	CHECK(parse_sampler_mode("optimal_state") == SamplerMode::OptimalState);
	CHECK(parse_sampler_mode("euler_sde") == SamplerMode::EulerSde);
	CHECK(sampler_mode_name(SamplerMode::EulerSde) == "euler_sde");
	CHECK_THROWS_AS(parse_sampler_mode("ddim"), Error);
}

TEST_CASE("non-finite trajectories are reported")
{
	const auto sched = make_schedule(10);
	const Eigen::ArrayXXd mu = Eigen::ArrayXXd::Zero(4, 4);
	NoiseFn broken = [](const Eigen::ArrayXXd& x, int) {
		return Eigen::ArrayXXd::Constant(x.rows(), x.cols(), std::numeric_limits<double>::quiet_NaN()).eval();
	};
	try {
		reverse_pass(mu, broken, sched, SamplerConfig{});
		FAIL("expected an exception");
	} catch (const Error& e) {
		CHECK(e.code() == ErrorCode::NonFiniteState);
	}
}

TEST_CASE("restore returns a full HQ grid and is reproducible")
{
	const auto ck = make_checkpoint(DenoiserConfig{}, 8, 1);
	const HeightGrid lq = voided_lq(32, 7);
	REQUIRE(lq.valid_count() < lq.valid.size());
	SamplerConfig cfg;
	cfg.seed = 9;
	const HeightGrid a = restore(lq, ck, ck.schedule, cfg);
	CHECK(a.rows() == 32);
	CHECK(a.cols() == 32);
	CHECK(a.valid.all());
	CHECK(a.values.allFinite());
	CHECK(a.cell_size == doctest::Approx(lq.cell_size / 2));
	CHECK(restore(lq, ck, ck.schedule, cfg).values.isApprox(a.values, 0.0));

	cfg.stochastic = true;
	const HeightGrid s1 = restore(lq, ck, ck.schedule, cfg);
	cfg.seed = 10;
	CHECK_FALSE(restore(lq, ck, ck.schedule, cfg).values.isApprox(s1.values, 1e-12));
}

TEST_CASE("schedule and scale mismatches are rejected")
{
	const auto ck = make_checkpoint(DenoiserConfig{}, 8, 1);
	const HeightGrid lq = voided_lq(16, 7);
	SamplerConfig cfg;
	cfg.T = 9;
	try {
		restore(lq, ck, make_schedule(9), cfg);
		FAIL("expected an exception");
	} catch (const Error& e) {
		CHECK(e.code() == ErrorCode::SchedMismatch);
	}
	cfg.T = 0;
	CHECK_THROWS_AS(restore(lq, ck, make_schedule(8, 0.3), cfg), Error);
	cfg.scale = 4;
	CHECK_THROWS_AS(restore(lq, ck, ck.schedule, cfg), Error);
	cfg.scale = 0;
	CHECK_THROWS_AS(restore(voided_lq(20, 1), ck, ck.schedule, cfg), Error);
}

TEST_CASE("batch restore equals per-tile restores")
{
	const auto ck = make_checkpoint(DenoiserConfig{}, 6, 2);
	TileSet tiles;
	tiles.tiles = {voided_lq(16, 1), voided_lq(16, 2)};
	tiles.source_index = {0, 1};
	SamplerConfig cfg;
	cfg.seed = 21;
	cfg.stochastic = true;
	const TileSet out = restore_batch(tiles, ck, ck.schedule, cfg);
	REQUIRE(out.size() == 2);
	for (std::size_t k = 0; k < 2; ++k) {
		SamplerConfig single = cfg;
		single.seed = tile_seed(cfg.seed, k);
		CHECK(restore(tiles.tiles[k], ck, ck.schedule, single).values.isApprox(out.tiles[k].values, 0.0));
	}
	cfg.threads = 2;
	const TileSet threaded = restore_batch(tiles, ck, ck.schedule, cfg);
	for (std::size_t k = 0; k < 2; ++k)
		CHECK(threaded.tiles[k].values.isApprox(out.tiles[k].values, 0.0));

	CHECK(restore_batch(TileSet{}, ck, ck.schedule, cfg).empty());
	tiles.tiles.push_back(voided_lq(24, 3));
	CHECK_THROWS_AS(restore_batch(tiles, ck, ck.schedule, cfg), Error);
}

TEST_CASE("every mask preset restores without voids or non-finite cells")
{
	const auto ck = make_checkpoint(tiny_model(), 4, 3);
	for (const char* preset : {"M-311", "M-423", "M-442", "M-533"}) {
		const HeightGrid out = restore(voided_lq(32, 11, preset), ck, ck.schedule, SamplerConfig{});
		CHECK(out.valid.all());
		CHECK(out.values.allFinite());
	}
}

TEST_CASE("1690 tiles stream through with bounded memory")
{
	const auto ck = make_checkpoint(tiny_model(), 2, 4);
	const HeightGrid lq = voided_lq(96, 5);
	std::size_t seen = 0;
	bool ordered = true, clean = true;
	restore_stream(
		1690, [&](std::size_t) { return lq; },
		[&](std::size_t k, HeightGrid g) {
			ordered = ordered && k == seen;
			clean = clean && g.rows() == 96 && g.valid.all() && g.values.allFinite();
			++seen;
		},
		ck, ck.schedule, SamplerConfig{});
	CHECK(seen == 1690);
	CHECK(ordered);
	CHECK(clean);
}
