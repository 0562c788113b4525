#include "demsde/denoiser.hpp"
#include "demsde/degrade.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace demsde {

using nn::Graph;
using nn::ParamStore;
using nn::Tensor;
using nn::Var;

namespace {

std::string at(const std::string& prefix, const std::string& leaf) { return prefix + "." + leaf; }

template <typename Scalar>
Var P(Graph<Scalar>& g, const ParamStore<Scalar>& p, const std::string& name)
{
	return g.param(p, name);
}

// 1x1 convolution (also serves as a dense layer on (c, 1, 1) vectors).
template <typename Scalar>
Var pointwise(Graph<Scalar>& g, const ParamStore<Scalar>& p, const std::string& prefix, Var x)
{
	return nn::conv2d(g, x, P(g, p, at(prefix, "w")), P(g, p, at(prefix, "b")), 1);
}

void add_conv(std::vector<ParamSpec>& out, const std::string& prefix, int cout, int cin, int k, ParamInit init,
	const std::string& cls)
{
	out.push_back({at(prefix, "w"), cout, 1, cin * k * k, init, cin * k * k, cls});
	out.push_back({at(prefix, "b"), cout, 1, 1, ParamInit::Zero, cin * k * k, cls + "_bias"});
}

void add_eab(std::vector<ParamSpec>& out, const std::string& prefix, const DenoiserConfig& cfg, int c)
{
	out.push_back({at(prefix, "ln.g"), c, 1, 1, ParamInit::One, 1, "layer_norm"});
	out.push_back({at(prefix, "ln.b"), c, 1, 1, ParamInit::Zero, 1, "layer_norm"});
	add_conv(out, at(prefix, "mod"), 2 * c, cfg.time_embed_dim, 1, ParamInit::Zero, "modulation");
	add_conv(out, at(prefix, "pw"), 2 * c, c, 1, ParamInit::FanInUniform, "conv");
	for (int k : cfg.dwc_kernels) {
		const std::string name = at(prefix, "dw" + std::to_string(k));
		out.push_back({at(name, "w"), 2 * c, 1, k * k, ParamInit::FanInUniform, k * k, "depthwise"});
		out.push_back({at(name, "b"), 2 * c, 1, 1, ParamInit::Zero, k * k, "depthwise_bias"});
	}
	const int gated = static_cast<int>(cfg.dwc_kernels.size()) * c;
	add_conv(out, at(prefix, "sca"), gated, gated, 1, ParamInit::FanInUniform, "simple_channel_attention");
	add_conv(out, at(prefix, "proj"), c, gated, 1, ParamInit::Zero, "projection");
}

template <typename Scalar>
Tensor<Scalar> as_tensor(const Eigen::ArrayXXd& field)
{
	return nn::from_field<Scalar>(field);
}

} // namespace

// ---- configuration --------------------------------------------------------------

DenoiserConfig DenoiserConfig::reference()
{
	DenoiserConfig cfg;
	cfg.base_channels = 64;
	cfg.tpe_channels = 4;
	cfg.tpe_blocks = 3;
	cfg.depths = 4;
	cfg.encoder_blocks = {4, 1, 1, 1};
	cfg.decoder_blocks = {1, 1, 1, 1};
	cfg.middle_blocks = 1;
	cfg.time_embed_dim = 64;
	return cfg;
}

DenoiserConfig DenoiserConfig::reference_literal()
{
	DenoiserConfig cfg = reference();
	cfg.encoder_blocks = {14, 1, 1, 1};
	return cfg;
}

void DenoiserConfig::validate() const
{
	auto fail = [](const std::string& what) { throw Error(ErrorCode::BadParam, "denoiser config: " + what); };
	if (base_channels < 1 || tpe_channels < 1 || tpe_blocks < 1 || depths < 1 || middle_blocks < 0)
		fail("channel and block counts must be positive");
	if (static_cast<int>(encoder_blocks.size()) != depths || static_cast<int>(decoder_blocks.size()) != depths)
		fail("encoder_blocks and decoder_blocks need one entry per depth");
	for (int n : encoder_blocks)
		if (n < 1)
			fail("encoder block counts must be >= 1");
	for (int n : decoder_blocks)
		if (n < 1)
			fail("decoder block counts must be >= 1");
	if (time_embed_dim < 2 || time_embed_dim % 2 != 0)
		fail("time_embed_dim must be even and >= 2");
	for (int k : dwc_kernels)
		if (k < 1 || k % 2 == 0)
			fail("depthwise kernels must be odd");
	if (deform_kernel < 1 || deform_kernel % 2 == 0)
		fail("deform_kernel must be odd");
	if (ca_reduction < 1)
		fail("ca_reduction must be >= 1");
}

nlohmann::json to_json(const DenoiserConfig& cfg)
{
	return {
		{"base_channels", cfg.base_channels},
		{"tpe_channels", cfg.tpe_channels},
		{"tpe_blocks", cfg.tpe_blocks},
		{"depths", cfg.depths},
		{"encoder_blocks", cfg.encoder_blocks},
		{"decoder_blocks", cfg.decoder_blocks},
		{"middle_blocks", cfg.middle_blocks},
		{"time_embed_dim", cfg.time_embed_dim},
		{"dwc_kernels", cfg.dwc_kernels},
		{"deform_kernel", cfg.deform_kernel},
		{"ca_reduction", cfg.ca_reduction},
	};
}

DenoiserConfig denoiser_config_from_json(const nlohmann::json& j)
{
	DenoiserConfig cfg;
	try {
		if (j.contains("preset")) {
			const auto preset = j.at("preset").get<std::string>();
			if (preset == "reference")
				cfg = DenoiserConfig::reference();
			else if (preset == "reference_literal")
				cfg = DenoiserConfig::reference_literal();
			else if (preset != "desk")
				throw Error(ErrorCode::BadParam, "unknown denoiser preset '" + preset + "'");
		}
		cfg.base_channels = j.value("base_channels", cfg.base_channels);
		cfg.tpe_channels = j.value("tpe_channels", cfg.tpe_channels);
		cfg.tpe_blocks = j.value("tpe_blocks", cfg.tpe_blocks);
		cfg.depths = j.value("depths", cfg.depths);
		cfg.middle_blocks = j.value("middle_blocks", cfg.middle_blocks);
		cfg.time_embed_dim = j.value("time_embed_dim", cfg.time_embed_dim);
		cfg.deform_kernel = j.value("deform_kernel", cfg.deform_kernel);
		cfg.ca_reduction = j.value("ca_reduction", cfg.ca_reduction);
		if (j.contains("encoder_blocks"))
			cfg.encoder_blocks = j.at("encoder_blocks").get<std::vector<int>>();
		else
			cfg.encoder_blocks.resize(static_cast<std::size_t>(std::max(cfg.depths, 0)), 1);
		if (j.contains("decoder_blocks"))
			cfg.decoder_blocks = j.at("decoder_blocks").get<std::vector<int>>();
		else
			cfg.decoder_blocks.resize(static_cast<std::size_t>(std::max(cfg.depths, 0)), 1);
		if (j.contains("dwc_kernels"))
			cfg.dwc_kernels = j.at("dwc_kernels").get<std::array<int, 3>>();
	} catch (const nlohmann::json::exception& e) {
		throw Error(ErrorCode::ParseError, std::string("denoiser config: ") + e.what());
	}
	cfg.validate();
	return cfg;
}

std::vector<ParamSpec> param_layout(const DenoiserConfig& cfg)
{
	cfg.validate();
	std::vector<ParamSpec> out;
	const int tc = cfg.tpe_channels;
	const int C = cfg.base_channels;
	const int K = cfg.deform_kernel * cfg.deform_kernel;

	add_conv(out, "tpe.in", tc, 1, 3, ParamInit::FanInUniform, "conv");
	for (int b = 0; b < cfg.tpe_blocks; ++b) {
		const std::string tab = "tpe.tab" + std::to_string(b);
		for (const char* dc : {"dc1", "dc2"}) {
			const std::string name = at(tab, dc);
			add_conv(out, at(name, "off"), 2 * K, tc, 3, ParamInit::Zero, "deform_offset");
			add_conv(out, name, tc, tc, cfg.deform_kernel, ParamInit::FanInUniform, "deform");
		}
		const int hidden = std::max(1, tc / cfg.ca_reduction);
		add_conv(out, at(tab, "ca.fc1"), hidden, tc, 1, ParamInit::FanInUniform, "channel_attention");
		add_conv(out, at(tab, "ca.fc2"), tc, hidden, 1, ParamInit::FanInUniform, "channel_attention");
	}
	add_conv(out, "tpe.out", C, tc, 1, ParamInit::Zero, "projection");

	add_conv(out, "intro", C, 2, 1, ParamInit::FanInUniform, "conv");

	const int d = cfg.time_embed_dim;
	add_conv(out, "time.fc1", 2 * d, d, 1, ParamInit::FanInUniform, "time_mlp");
	add_conv(out, "time.fc2", d, 2 * d, 1, ParamInit::FanInUniform, "time_mlp");

	int c = C;
	for (int depth = 0; depth < cfg.depths; ++depth) {
		for (int j = 0; j < cfg.encoder_blocks[static_cast<std::size_t>(depth)]; ++j)
			add_eab(out, "enc" + std::to_string(depth) + ".b" + std::to_string(j), cfg, c);
		add_conv(out, "down" + std::to_string(depth), 2 * c, c, 2, ParamInit::FanInUniform, "conv");
		c *= 2;
	}
	for (int j = 0; j < cfg.middle_blocks; ++j)
		add_eab(out, "mid.b" + std::to_string(j), cfg, c);
	for (int depth = cfg.depths - 1; depth >= 0; --depth) {
		add_conv(out, "up" + std::to_string(depth), c / 2, c, 1, ParamInit::FanInUniform, "conv");
		c /= 2;
		for (int j = 0; j < cfg.decoder_blocks[static_cast<std::size_t>(depth)]; ++j)
			add_eab(out, "dec" + std::to_string(depth) + ".b" + std::to_string(j), cfg, c);
	}
	add_conv(out, "out", 1, C, 3, ParamInit::FanInUniform, "conv");
	return out;
}

template <typename Scalar>
ParamStore<Scalar> init_params(const DenoiserConfig& cfg, std::uint64_t seed)
{
	std::mt19937_64 rng(seed);
	ParamStore<Scalar> store;
	for (const auto& spec : param_layout(cfg)) {
		Tensor<Scalar> t(spec.c, spec.h, spec.w);
		switch (spec.init) {
		case ParamInit::Zero:
			break;
		case ParamInit::One:
			t.data.setOnes();
			break;
		case ParamInit::FanInUniform: {
			std::uniform_real_distribution<double> u(-1.0, 1.0);
			const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
			for (Eigen::Index k = 0; k < t.data.size(); ++k)
				t.data.data()[k] = static_cast<Scalar>(bound * u(rng));
			break;
		}
		}
		store.add(spec.name, std::move(t));
	}
	return store;
}

template <typename Scalar>
void randomize_params(ParamStore<Scalar>& params, std::uint64_t seed, double scale)
{
	std::mt19937_64 rng(seed);
	std::uniform_real_distribution<double> u(-scale, scale);
	for (std::size_t k = 0; k < params.size(); ++k) {
		auto& t = params.at(k);
		const bool gain = params.name(k).ends_with("ln.g");
		for (Eigen::Index n = 0; n < t.data.size(); ++n)
			t.data.data()[n] = static_cast<Scalar>((gain ? 1.0 : 0.0) + u(rng));
	}
}

// ---- blocks ---------------------------------------------------------------------

template <typename Scalar>
Var deformable_conv_block(Graph<Scalar>& g, const ParamStore<Scalar>& p, const std::string& prefix, Var x, int kernel)
{
	Var off = nn::conv2d(g, x, P(g, p, at(prefix, "off.w")), P(g, p, at(prefix, "off.b")), 3, 1, 1);
	return nn::deform_conv2d(g, x, off, P(g, p, at(prefix, "w")), P(g, p, at(prefix, "b")), kernel);
}

template <typename Scalar>
Var channel_attention(Graph<Scalar>& g, const ParamStore<Scalar>& p, const std::string& prefix, Var x)
{
	Var pooled = nn::global_avg_pool(g, x);
	Var hidden = nn::gelu(g, pointwise(g, p, at(prefix, "fc1"), pooled));
	Var gate = nn::sigmoid(g, pointwise(g, p, at(prefix, "fc2"), hidden));
	return nn::scale_channels(g, x, gate);
}

template <typename Scalar>
Var tpe_forward(Graph<Scalar>& g, const ParamStore<Scalar>& p, const DenoiserConfig& cfg, Var lifted)
{
	Var x = nn::conv2d(g, lifted, P(g, p, "tpe.in.w"), P(g, p, "tpe.in.b"), 3, 1, 1, nn::Padding::Replicate);
	for (int b = 0; b < cfg.tpe_blocks; ++b) {
		const std::string tab = "tpe.tab" + std::to_string(b);
		Var y = deformable_conv_block(g, p, at(tab, "dc1"), x, cfg.deform_kernel);
		y = nn::gelu(g, y);
		y = deformable_conv_block(g, p, at(tab, "dc2"), y, cfg.deform_kernel);
		y = channel_attention(g, p, at(tab, "ca"), y);
		x = nn::add(g, x, y);
	}
	return pointwise(g, p, "tpe.out", x);
}

template <typename Scalar>
Tensor<Scalar> sinusoidal_embedding(int step, int dim)
{
	Tensor<Scalar> e(dim, 1, 1);
	const int half = dim / 2;
	for (int k = 0; k < half; ++k) {
		const double freq = std::exp(-std::log(10000.0) * k / half);
		e.data(k, 0) = static_cast<Scalar>(std::sin(step * freq));
		e.data(half + k, 0) = static_cast<Scalar>(std::cos(step * freq));
	}
	return e;
}

template <typename Scalar>
Var time_features(Graph<Scalar>& g, const ParamStore<Scalar>& p, const DenoiserConfig& cfg, int step)
{
	Var e = g.constant(sinusoidal_embedding<Scalar>(step, cfg.time_embed_dim));
	Var h = nn::gelu(g, pointwise(g, p, "time.fc1", e));
	return pointwise(g, p, "time.fc2", h);
}

template <typename Scalar>
Modulation<Scalar> time_embed(
	Graph<Scalar>& g, const ParamStore<Scalar>& p, const std::string& prefix, Var time_feature, int channels)
{
	Var coeff = pointwise(g, p, at(prefix, "mod"), nn::gelu(g, time_feature));
	return {nn::slice_channels(g, coeff, 0, channels), nn::slice_channels(g, coeff, channels, channels)};
}

template <typename Scalar>
Var simple_gate(Graph<Scalar>& g, Var x)
{
	const int c = g.value(x).c;
	if (c % 2 != 0)
		throw Error(ErrorCode::ShapeMismatch, "simple gate needs an even channel count");
	return nn::mul(g, nn::slice_channels(g, x, 0, c / 2), nn::slice_channels(g, x, c / 2, c / 2));
}

template <typename Scalar>
Var eab_forward(Graph<Scalar>& g, const ParamStore<Scalar>& p, const DenoiserConfig& cfg, const std::string& prefix,
	Var x, const Modulation<Scalar>& mod)
{
	const int c = g.value(x).c;
	if (p.get(at(prefix, "ln.g")).c != c)
		throw Error(ErrorCode::ShapeMismatch, prefix + ": channel count does not match parameters");
	Var h = nn::layer_norm(g, x, P(g, p, at(prefix, "ln.g")), P(g, p, at(prefix, "ln.b")));
	h = nn::modulate(g, h, mod.alpha_minus_one, mod.beta);
	h = pointwise(g, p, at(prefix, "pw"), h);
	std::vector<Var> branches;
	for (int k : cfg.dwc_kernels) {
		const std::string name = at(prefix, "dw" + std::to_string(k));
		branches.push_back(nn::depthwise_conv2d(g, h, P(g, p, at(name, "w")), P(g, p, at(name, "b")), k));
	}
	h = simple_gate(g, nn::concat_channels(g, branches));
	Var gate = pointwise(g, p, at(prefix, "sca"), nn::global_avg_pool(g, h));
	h = nn::scale_channels(g, h, gate);
	h = pointwise(g, p, at(prefix, "proj"), h);
	return nn::add(g, x, h);
}

void check_input_shape(const DenoiserConfig& cfg, Eigen::Index rows, Eigen::Index cols)
{
	const int m = cfg.size_multiple();
	if (rows <= 0 || cols <= 0 || rows % m != 0 || cols % m != 0)
		throw Error(ErrorCode::ShapeMismatch, "patch " + std::to_string(rows) + "x" + std::to_string(cols) +
												  " is not a multiple of " + std::to_string(m) + " in both dimensions");
	if (rows < cfg.deform_kernel || cols < cfg.deform_kernel)
		throw Error(ErrorCode::ShapeMismatch, "patch smaller than the deformable kernel");
}

template <typename Scalar>
Var predict_noise(Graph<Scalar>& g, const ParamStore<Scalar>& p, const DenoiserConfig& cfg, const Tensor<Scalar>& x_t,
	const Tensor<Scalar>& lifted_v, const Tensor<Scalar>& mu, int step)
{
	if (x_t.c != 1 || !x_t.same_shape(mu) || !x_t.same_shape(lifted_v))
		throw Error(ErrorCode::ShapeMismatch, "state, lifted condition and mean must share one single-channel grid");
	check_input_shape(cfg, x_t.h, x_t.w);

	Var v = g.constant(lifted_v);
	Var cond = g.constant(mu);
	Var state = g.constant(x_t);

	Var prior = tpe_forward(g, p, cfg, v);
	Var trunk = pointwise(g, p, "intro", nn::concat_channels(g, std::vector<Var>{cond, state}));
	Var x = nn::add(g, prior, trunk);

	Var tfeat = time_features(g, p, cfg, step);
	auto block = [&](const std::string& name, Var in) {
		return eab_forward(g, p, cfg, name, in, time_embed(g, p, name, tfeat, g.value(in).c));
	};

	std::vector<Var> skips;
	for (int depth = 0; depth < cfg.depths; ++depth) {
		const std::string lvl = std::to_string(depth);
		for (int j = 0; j < cfg.encoder_blocks[static_cast<std::size_t>(depth)]; ++j)
			x = block("enc" + lvl + ".b" + std::to_string(j), x);
		skips.push_back(x);
		x = nn::conv2d(g, x, P(g, p, "down" + lvl + ".w"), P(g, p, "down" + lvl + ".b"), 2, 2, 0);
	}
	for (int j = 0; j < cfg.middle_blocks; ++j)
		x = block("mid.b" + std::to_string(j), x);
	for (int depth = cfg.depths - 1; depth >= 0; --depth) {
		const std::string lvl = std::to_string(depth);
		// 1x1 conv commutes with nearest upsampling, so project at the coarse level
		x = nn::upsample_nearest2(g, pointwise(g, p, "up" + lvl, x));
		x = nn::add(g, x, skips[static_cast<std::size_t>(depth)]);
		for (int j = 0; j < cfg.decoder_blocks[static_cast<std::size_t>(depth)]; ++j)
			x = block("dec" + lvl + ".b" + std::to_string(j), x);
	}
	return nn::conv2d(g, x, P(g, p, "out.w"), P(g, p, "out.b"), 3, 1, 1);
}

Eigen::ArrayXXd lift_to(const Eigen::ArrayXXd& lq, Eigen::Index rows, Eigen::Index cols)
{
	if (lq.rows() == rows && lq.cols() == cols)
		return lq;
	if (lq.rows() == 0 || rows % lq.rows() != 0 || cols % lq.cols() != 0 || rows / lq.rows() != cols / lq.cols())
		throw Error(ErrorCode::ShapeMismatch, "LQ patch is not an integer downscale of the state grid");
	return upsample_bicubic(lq, static_cast<int>(rows / lq.rows()));
}

template <typename Scalar>
NoisePredictor<Scalar>::NoisePredictor(DenoiserConfig cfg, ParamStore<Scalar> params)
	: cfg_(std::move(cfg)), params_(std::move(params))
{
	cfg_.validate();
	for (const auto& spec : param_layout(cfg_)) {
		if (!params_.contains(spec.name))
			throw Error(ErrorCode::ShapeMismatch, "missing parameter " + spec.name);
		const auto& t = params_.get(spec.name);
		if (t.c != spec.c || t.h != spec.h || t.w != spec.w)
			throw Error(ErrorCode::ShapeMismatch, "parameter " + spec.name + " has the wrong shape");
	}
}

template <typename Scalar>
Eigen::ArrayXXd NoisePredictor<Scalar>::operator()(
	const Eigen::ArrayXXd& x_t, const Eigen::ArrayXXd& v_lq, const Eigen::ArrayXXd& mu, int step) const
{
	return predict_lifted(x_t, lift_to(v_lq, x_t.rows(), x_t.cols()), mu, step);
}

template <typename Scalar>
Eigen::ArrayXXd NoisePredictor<Scalar>::predict_lifted(
	const Eigen::ArrayXXd& x_t, const Eigen::ArrayXXd& lifted_v, const Eigen::ArrayXXd& mu, int step) const
{
	Graph<Scalar> g(false);
	Var out = predict_noise(g, params_, cfg_, as_tensor<Scalar>(x_t), as_tensor<Scalar>(lifted_v), as_tensor<Scalar>(mu), step);
	return nn::to_field<double>(g.value(out));
}

// ---- checkpoint -------------------------------------------------------------------

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path)
{
	nlohmann::json manifest;
	manifest["config"] = to_json(ckpt.config);
	manifest["schedule"] = schedule_to_json(ckpt.schedule);
	manifest["step"] = ckpt.step;
	manifest["meta"] = ckpt.meta;
	manifest["dtype"] = "f64";
	manifest["params"] = nlohmann::json::array();
	for (std::size_t k = 0; k < ckpt.params.size(); ++k) {
		const auto& t = ckpt.params.at(k);
		manifest["params"].push_back({{"name", ckpt.params.name(k)}, {"shape", {t.c, t.h, t.w}}});
	}
	const std::string text = manifest.dump();

	std::ofstream out(path, std::ios::binary | std::ios::trunc);
	if (!out)
		throw Error(ErrorCode::IoError, "cannot write " + path.string());
	static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes a little-endian host");
	out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
	const std::uint32_t version = kCheckpointVersion;
	const std::uint64_t len = text.size();
	out.write(reinterpret_cast<const char*>(&version), sizeof(version));
	out.write(reinterpret_cast<const char*>(&len), sizeof(len));
	out.write(text.data(), static_cast<std::streamsize>(text.size()));
	for (std::size_t k = 0; k < ckpt.params.size(); ++k) {
		const auto& t = ckpt.params.at(k);
		out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(double)));
	}
	if (!out)
		throw Error(ErrorCode::IoError, "write failed on " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
	std::ifstream in(path, std::ios::binary);
	if (!in)
		throw Error(ErrorCode::IoError, "cannot open " + path.string());
	char magic[sizeof(kCheckpointMagic)];
	std::uint32_t version = 0;
	std::uint64_t len = 0;
	in.read(magic, sizeof(magic));
	in.read(reinterpret_cast<char*>(&version), sizeof(version));
	in.read(reinterpret_cast<char*>(&len), sizeof(len));
	if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
		throw Error(ErrorCode::ParseError, path.string() + " is not a checkpoint");
	if (version != kCheckpointVersion)
		throw Error(ErrorCode::ParseError, "unsupported checkpoint version " + std::to_string(version));
	if (len > (std::uint64_t{1} << 30))
		throw Error(ErrorCode::ParseError, "implausible manifest length");
	std::string text(len, '\0');
	in.read(text.data(), static_cast<std::streamsize>(len));
	if (!in)
		throw Error(ErrorCode::ParseError, "truncated manifest");

	Checkpoint ckpt;
	try {
		const auto manifest = nlohmann::json::parse(text);
		ckpt.config = denoiser_config_from_json(manifest.at("config"));
		ckpt.schedule = schedule_from_json(manifest.at("schedule"));
		ckpt.step = manifest.value("step", std::int64_t{0});
		ckpt.meta = manifest.value("meta", nlohmann::json::object());
		for (const auto& entry : manifest.at("params")) {
			const auto shape = entry.at("shape").get<std::array<int, 3>>();
			Tensor<double> t(shape[0], shape[1], shape[2]);
			in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(double)));
			if (!in)
				throw Error(ErrorCode::ParseError, "truncated tensor payload");
			ckpt.params.add(entry.at("name").get<std::string>(), std::move(t));
		}
	} catch (const nlohmann::json::exception& e) {
		throw Error(ErrorCode::ParseError, std::string("checkpoint manifest: ") + e.what());
	}
	// validates names and shapes against the declared architecture
	NoisePredictor<double> probe(ckpt.config, ckpt.params);
	(void)probe;
	return ckpt;
}

#define DEMSDE_INSTANTIATE(S)                                                                                          \
	template ParamStore<S> init_params<S>(const DenoiserConfig&, std::uint64_t);                                       \
	template void randomize_params<S>(ParamStore<S>&, std::uint64_t, double);                                          \
	template Var deformable_conv_block<S>(Graph<S>&, const ParamStore<S>&, const std::string&, Var, int);              \
	template Var channel_attention<S>(Graph<S>&, const ParamStore<S>&, const std::string&, Var);                       \
	template Var tpe_forward<S>(Graph<S>&, const ParamStore<S>&, const DenoiserConfig&, Var);                          \
	template Tensor<S> sinusoidal_embedding<S>(int, int);                                                              \
	template Var time_features<S>(Graph<S>&, const ParamStore<S>&, const DenoiserConfig&, int);                        \
	template Modulation<S> time_embed<S>(Graph<S>&, const ParamStore<S>&, const std::string&, Var, int);               \
	template Var simple_gate<S>(Graph<S>&, Var);                                                                       \
	template Var eab_forward<S>(                                                                                       \
		Graph<S>&, const ParamStore<S>&, const DenoiserConfig&, const std::string&, Var, const Modulation<S>&);        \
	template Var predict_noise<S>(Graph<S>&, const ParamStore<S>&, const DenoiserConfig&, const Tensor<S>&,           \
		const Tensor<S>&, const Tensor<S>&, int);                                                                      \
	template class NoisePredictor<S>;

DEMSDE_INSTANTIATE(float)
DEMSDE_INSTANTIATE(double)

#undef DEMSDE_INSTANTIATE

} // namespace demsde
