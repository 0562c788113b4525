#include "demsde/training.hpp"
#include "demsde/eval.hpp"
#include "demsde/sampling.hpp"

#include <cmath>
#include <cstdio>
#include <algorithm>
#include <numbers>
#include <numeric>
#include <thread>

namespace demsde {

TrainConfig TrainConfig::reference()
{
	TrainConfig cfg;
	cfg.iterations = 500000;
	cfg.batch_size = 4;
	cfg.lr_init = 4e-5;
	cfg.lr_min = 0.0;
	cfg.edge_weight = 1.0;
	return cfg;
}

TrainConfig TrainConfig::reference_voids()
{
	TrainConfig cfg = reference();
	cfg.beta2 = 0.5;
	return cfg;
}

void TrainConfig::validate(int T) const
{
	auto fail = [](const std::string& what) { throw Error(ErrorCode::BadParam, "train config: " + what); };
	if (iterations < 0)
		fail("iterations must be >= 0");
	if (batch_size < 1)
		fail("batch_size must be >= 1");
	if (!(lr_init >= 0.0) || !(lr_min >= 0.0) || lr_min > lr_init)
		fail("need 0 <= lr_min <= lr_init");
	if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
		fail("beta1 and beta2 must lie in (0, 1)");
	if (!(eps > 0.0) || !(weight_decay >= 0.0) || !(edge_weight >= 0.0))
		fail("eps must be positive, weight_decay and edge_weight non-negative");
	if (!gamma.empty() && static_cast<int>(gamma.size()) != T)
		fail("gamma needs one weight per step (" + std::to_string(T) + ")");
	for (double g : gamma)
		if (!(g > 0.0))
			fail("gamma weights must be positive");
	if (scale < 1)
		fail("scale must be >= 1");
	if (threads < 1)
		fail("threads must be >= 1");
	parse_mask_preset(mask_preset);
}

double TrainConfig::gamma_at(int i) const
{
	return gamma.empty() ? 1.0 : gamma.at(static_cast<std::size_t>(i - 1));
}

nlohmann::json to_json(const TrainConfig& c)
{
	return {{"iterations", c.iterations}, {"batch_size", c.batch_size}, {"lr_init", c.lr_init}, {"lr_min", c.lr_min},
		{"lr_schedule", "cosine"}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps},
		{"weight_decay", c.weight_decay}, {"gamma", c.gamma}, {"edge_weight", c.edge_weight}, {"seed", c.seed},
		{"scale", c.scale}, {"mask_preset", c.mask_preset}, {"checkpoint_every", c.checkpoint_every},
		{"validate_every", c.validate_every}, {"validation_tiles", c.validation_tiles}, {"threads", c.threads}};
}

TrainConfig train_config_from_json(const nlohmann::json& j)
{
	TrainConfig c;
	try {
		if (j.contains("preset")) {
			const auto preset = j.at("preset").get<std::string>();
			if (preset == "reference")
				c = TrainConfig::reference();
			else if (preset == "reference_voids")
				c = TrainConfig::reference_voids();
			else if (preset != "desk")
				throw Error(ErrorCode::BadParam, "unknown training preset '" + preset + "'");
		}
		c.iterations = j.value("iterations", c.iterations);
		c.batch_size = j.value("batch_size", c.batch_size);
		c.lr_init = j.value("lr_init", c.lr_init);
		c.lr_min = j.value("lr_min", c.lr_min);
		c.beta1 = j.value("beta1", c.beta1);
		c.beta2 = j.value("beta2", c.beta2);
		c.eps = j.value("eps", c.eps);
		c.weight_decay = j.value("weight_decay", c.weight_decay);
		c.gamma = j.value("gamma", c.gamma);
		c.edge_weight = j.value("edge_weight", c.edge_weight);
		c.seed = j.value("seed", c.seed);
		c.scale = j.value("scale", c.scale);
		c.mask_preset = j.value("mask_preset", c.mask_preset);
		c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
		c.validate_every = j.value("validate_every", c.validate_every);
		c.validation_tiles = j.value("validation_tiles", c.validation_tiles);
		c.threads = j.value("threads", c.threads);
		if (j.contains("lr_schedule") && j.at("lr_schedule") != "cosine")
			throw Error(ErrorCode::BadParam, "only the cosine lr_schedule is supported");
	} catch (const nlohmann::json::exception& e) {
		throw Error(ErrorCode::ParseError, std::string("train config: ") + e.what());
	}
	return c;
}

double learning_rate(const TrainConfig& cfg, std::int64_t step)
{
	if (cfg.iterations <= 1)
		return cfg.lr_init;
	const double t = std::clamp(static_cast<double>(step) / (cfg.iterations - 1), 0.0, 1.0);
	return cfg.lr_min + 0.5 * (cfg.lr_init - cfg.lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

template <typename Scalar>
TrainState<Scalar> TrainState<Scalar>::fresh(nn::ParamStore<Scalar> params, std::uint64_t seed)
{
	TrainState s;
	s.m = params.zeros_like();
	s.v = params.zeros_like();
	s.params = std::move(params);
	s.rng.seed(seed);
	return s;
}

double grad_loss(const Eigen::ArrayXXd& h_hat, const Eigen::ArrayXXd& h_gt)
{
	if (h_hat.rows() != h_gt.rows() || h_hat.cols() != h_gt.cols())
		throw Error(ErrorCode::DimMismatch, "grad_loss operands differ in shape");
	if (h_hat.rows() < 2 || h_hat.cols() < 2)
		throw Error(ErrorCode::TooSmall, "grad_loss needs at least 2x2 cells");
	const Eigen::ArrayXXd d = h_hat - h_gt;
	const Eigen::Index r = d.rows(), c = d.cols();
	const double sx = (d.rightCols(c - 1) - d.leftCols(c - 1)).square().sum();
	const double sy = (d.bottomRows(r - 1) - d.topRows(r - 1)).square().sum();
	return (sx + sy) / static_cast<double>(r * (c - 1) + (r - 1) * c);
}

Eigen::ArrayXXd grad_loss_gradient(const Eigen::ArrayXXd& h_hat, const Eigen::ArrayXXd& h_gt)
{
	grad_loss(h_hat, h_gt);
	const Eigen::ArrayXXd d = h_hat - h_gt;
	const Eigen::Index r = d.rows(), c = d.cols();
	const double n = static_cast<double>(r * (c - 1) + (r - 1) * c);
	Eigen::ArrayXXd g = Eigen::ArrayXXd::Zero(r, c);
	const Eigen::ArrayXXd dx = 2.0 * (d.rightCols(c - 1) - d.leftCols(c - 1)) / n;
	const Eigen::ArrayXXd dy = 2.0 * (d.bottomRows(r - 1) - d.topRows(r - 1)) / n;
	g.rightCols(c - 1) += dx;
	g.leftCols(c - 1) -= dx;
	g.bottomRows(r - 1) += dy;
	g.topRows(r - 1) -= dy;
	return g;
}

template <typename Scalar>
void adamw_update(TrainState<Scalar>& state, const nn::ParamStore<Scalar>& grads, const TrainConfig& cfg, double lr)
{
	const double t = static_cast<double>(state.step + 1);
	const auto b1 = static_cast<Scalar>(cfg.beta1);
	const auto b2 = static_cast<Scalar>(cfg.beta2);
	const auto c1 = static_cast<Scalar>(1.0 / (1.0 - std::pow(cfg.beta1, t)));
	const auto c2 = static_cast<Scalar>(1.0 / (1.0 - std::pow(cfg.beta2, t)));
	const auto eps = static_cast<Scalar>(cfg.eps);
	const auto step = static_cast<Scalar>(lr);
	const auto decay = static_cast<Scalar>(1.0 - lr * cfg.weight_decay);
	for (std::size_t k = 0; k < state.params.size(); ++k) {
		auto& p = state.params.at(k).data;
		auto& m = state.m.at(k).data;
		auto& v = state.v.at(k).data;
		const auto& g = grads.at(k).data;
		m = b1 * m + (Scalar(1) - b1) * g;
		v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
		if (lr == 0.0)
			continue;
		p *= decay;
		p.array() -= step * (m.array() * c1) / ((v.array() * c2).sqrt() + eps);
	}
}

namespace {

struct ItemResult
{
	double l_sde = 0.0;
	double l_edge = 0.0;
	std::exception_ptr error;
};

template <typename Scalar>
void item_forward_backward(const nn::ParamStore<Scalar>& params, const PatchPair& pair, int i,
	const Eigen::ArrayXXd& eps, const DiffusionSchedule& sched, const DenoiserConfig& model, const TrainConfig& cfg,
	double weight, nn::ParamStore<Scalar>& grads, ItemResult& res)
{
	const Eigen::ArrayXXd& x0 = pair.d_hq.values;
	const Eigen::ArrayXXd& mu = pair.mu.values;
	const Eigen::ArrayXXd x_i = sample_state(x0, mu, sched, i, eps).x;

	nn::Graph<Scalar> g;
	const auto mu_t = nn::from_field<Scalar>(mu);
	nn::Var out = predict_noise(g, params, model, nn::from_field<Scalar>(x_i), mu_t, mu_t, i);
	const Eigen::ArrayXXd eps_hat = nn::to_field<double>(g.value(out));

	const double gamma = cfg.gamma_at(i);
	res.l_sde = sde_loss(eps_hat, eps, gamma);
	Eigen::ArrayXXd seed = gamma * (eps_hat - eps).sign() / static_cast<double>(eps.size());
	if (cfg.edge_weight > 0.0) {
		const Eigen::ArrayXXd x0_hat = x0_from_noise(x_i, eps_hat, mu, sched, i);
		res.l_edge = grad_loss(x0_hat, x0);
		const double dx0_deps = -std::sqrt(sched.variance(i)) * std::exp(sched.theta_bar(i));
		seed += cfg.edge_weight * dx0_deps * grad_loss_gradient(x0_hat, x0);
	}
	g.backward(out, nn::from_field<Scalar>(Eigen::ArrayXXd(weight * seed)));
	grads = params.zeros_like();
	g.accumulate_param_grads(grads);
}

} // namespace

template <typename Scalar>
StepReport train_step(TrainState<Scalar>& state, const std::vector<PatchPair>& batch, const DiffusionSchedule& sched,
	const DenoiserConfig& model, const TrainConfig& cfg)
{
	if (batch.empty())
		throw Error(ErrorCode::BadParam, "empty training batch");
	const int T = sched.steps();
	const std::size_t B = batch.size();

	// all randomness is drawn here, in item order, so threading cannot change it
	std::uniform_int_distribution<int> pick(1, T);
	std::normal_distribution<double> n01;
	std::vector<int> steps(B);
	std::vector<Eigen::ArrayXXd> noise(B);
	for (std::size_t b = 0; b < B; ++b) {
		steps[b] = pick(state.rng);
		noise[b].resize(batch[b].d_hq.rows(), batch[b].d_hq.cols());
		for (Eigen::Index k = 0; k < noise[b].size(); ++k)
			noise[b].data()[k] = n01(state.rng);
	}

	std::vector<nn::ParamStore<Scalar>> grads(B);
	std::vector<ItemResult> results(B);
	const double weight = 1.0 / static_cast<double>(B);
	auto work = [&](std::size_t b) {
		try {
			item_forward_backward(
				state.params, batch[b], steps[b], noise[b], sched, model, cfg, weight, grads[b], results[b]);
		} catch (...) {
			results[b].error = std::current_exception();
		}
	};
	const std::size_t workers = std::min<std::size_t>(B, static_cast<std::size_t>(std::max(1, cfg.threads)));
	if (workers <= 1) {
		for (std::size_t b = 0; b < B; ++b)
			work(b);
	} else {
		std::vector<std::thread> pool;
		for (std::size_t w = 0; w < workers; ++w)
			pool.emplace_back([&, w] {
				for (std::size_t b = w; b < B; b += workers)
					work(b);
			});
		for (auto& t : pool)
			t.join();
	}
	for (const auto& r : results)
		if (r.error)
			std::rethrow_exception(r.error);

	StepReport rep;
	rep.step = state.step;
	rep.lr = learning_rate(cfg, state.step);
	nn::ParamStore<Scalar> total = std::move(grads[0]);
	for (std::size_t b = 1; b < B; ++b)
		for (std::size_t k = 0; k < total.size(); ++k)
			total.at(k).data += grads[b].at(k).data;
	for (const auto& r : results) {
		rep.l_sde += r.l_sde * weight;
		rep.l_edge += r.l_edge * weight;
	}
	rep.loss = rep.l_sde + cfg.edge_weight * rep.l_edge;
	if (!std::isfinite(rep.loss) || !total.all_finite())
		throw Error(ErrorCode::NonFiniteLoss, "non-finite loss or gradient at step " + std::to_string(state.step) +
												  " (L_sde=" + std::to_string(rep.l_sde) +
												  ", L_edge=" + std::to_string(rep.l_edge) + ")");

	adamw_update(state, total, cfg, rep.lr);
	if (!state.params.all_finite())
		throw Error(ErrorCode::NonFiniteLoss, "parameters became non-finite at step " + std::to_string(state.step));
	++state.step;
	return rep;
}

void write_loss_csv(const std::vector<StepReport>& rows, const std::filesystem::path& path)
{
	std::FILE* f = std::fopen(path.string().c_str(), "w");
	if (!f)
		throw Error(ErrorCode::IoError, "cannot write " + path.string());
	std::fprintf(f, "step,L_sde,L_edge,L,lr\n");
	for (const auto& r : rows)
		std::fprintf(f, "%lld,%.9g,%.9g,%.9g,%.9g\n", static_cast<long long>(r.step), r.l_sde, r.l_edge, r.loss, r.lr);
	std::fclose(f);
}

TrainResult train(const TileSet& train_tiles, const TileSet& val_tiles, const DiffusionSchedule& sched,
	const DenoiserConfig& model, const TrainConfig& cfg, const TrainOutputs& out)
{
	cfg.validate(sched.steps());
	model.validate();
	const MaskSpec spec = parse_mask_preset(cfg.mask_preset);
	if (train_tiles.empty() && cfg.iterations > 0)
		throw Error(ErrorCode::EmptyPatch, "training set is empty");

	auto state = TrainState<float>::fresh(init_params<float>(model, cfg.seed), tile_seed(cfg.seed, 0));
	std::mt19937_64 data_rng(tile_seed(cfg.seed, 1));

	TrainResult result;
	result.checkpoint.config = model;
	result.checkpoint.schedule = sched;
	result.checkpoint.meta = {{"scale", cfg.scale}, {"mask_preset", cfg.mask_preset}, {"train", to_json(cfg)}};
	auto snapshot = [&] {
		result.checkpoint.params = state.params.cast<double>();
		result.checkpoint.step = state.step;
		return result.checkpoint;
	};

	if (!out.dir.empty())
		std::filesystem::create_directories(out.dir);

	// fixed validation pairs: first validation_tiles tiles, per-tile mask seeds
	std::vector<HeightGrid> val_lq, val_gt;
	for (std::size_t k = 0; k < val_tiles.size() && static_cast<int>(k) < cfg.validation_tiles; ++k) {
		const PatchPair p = make_pair(val_tiles.tiles[k], cfg.scale, spec, tile_seed(cfg.seed + 7, k));
		val_lq.push_back(denormalize(p.d_lq));
		val_gt.push_back(val_tiles.tiles[k]);
	}
	std::FILE* val_csv = nullptr;
	if (!out.dir.empty() && cfg.validate_every > 0 && !val_lq.empty()) {
		val_csv = std::fopen((out.dir / "validation.csv").string().c_str(), "w");
		if (val_csv)
			std::fprintf(val_csv, "step,rmse,psnr\n");
	}

	std::vector<std::size_t> order(train_tiles.size());
	std::size_t cursor = order.size();
	auto next_tile = [&]() -> const HeightGrid& {
		if (cursor == order.size()) {
			std::iota(order.begin(), order.end(), std::size_t{0});
			std::shuffle(order.begin(), order.end(), data_rng);
			cursor = 0;
		}
		return train_tiles.tiles[order[cursor++]];
	};

	for (int it = 0; it < cfg.iterations; ++it) {
		std::vector<PatchPair> batch;
		for (int b = 0; b < cfg.batch_size; ++b) {
			const HeightGrid& tile = next_tile();
			batch.push_back(make_pair(tile, cfg.scale, spec, data_rng()));
		}
		const StepReport rep = train_step(state, batch, sched, model, cfg);
		result.losses.push_back(rep);
		if (out.on_step)
			out.on_step(rep);

		const std::int64_t done = state.step;
		if (!out.dir.empty() && cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0)
			save_checkpoint(snapshot(), out.dir / ("ckpt_" + std::to_string(done) + ".bin"));
		if (val_csv && done % cfg.validate_every == 0) {
			const NoisePredictor<float> net(model, state.params);
			SamplerConfig sc;
			std::vector<HeightGrid> preds;
			for (std::size_t k = 0; k < val_lq.size(); ++k) {
				sc.seed = tile_seed(cfg.seed, k);
				preds.push_back(restore(val_lq[k], net, cfg.scale, sched, sc));
			}
			const auto ev = evaluate(preds, val_gt);
			std::fprintf(val_csv, "%lld,%.9g,%.9g\n", static_cast<long long>(done), ev.aggregate.rmse, ev.aggregate.psnr);
			std::fflush(val_csv);
		}
	}
	if (val_csv)
		std::fclose(val_csv);

	snapshot();
	if (!out.dir.empty()) {
		write_loss_csv(result.losses, out.dir / "loss.csv");
		save_checkpoint(result.checkpoint, out.dir / "model.ckpt");
	}
	return result;
}

template struct TrainState<float>;
template struct TrainState<double>;
template void adamw_update<float>(TrainState<float>&, const nn::ParamStore<float>&, const TrainConfig&, double);
template void adamw_update<double>(TrainState<double>&, const nn::ParamStore<double>&, const TrainConfig&, double);
template StepReport train_step<float>(TrainState<float>&, const std::vector<PatchPair>&, const DiffusionSchedule&,
	const DenoiserConfig&, const TrainConfig&);
template StepReport train_step<double>(TrainState<double>&, const std::vector<PatchPair>&, const DiffusionSchedule&,
	const DenoiserConfig&, const TrainConfig&);

} // namespace demsde
