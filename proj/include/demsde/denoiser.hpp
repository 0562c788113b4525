#pragma once

// Time-conditioned noise predictor: a terrain prior encoder built from
// deformable-convolution attention blocks, fused with a U-Net of efficient
// attention blocks (layer norm + time modulation, multi-scale depthwise
// convolutions, simple gate, simple channel attention).

#include "demsde/nn/ops.hpp"
#include "demsde/sde.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace demsde {

struct DenoiserConfig
{
	int base_channels = 16;
	int tpe_channels = 4;
	int tpe_blocks = 3;
	int depths = 3;
	std::vector<int> encoder_blocks = {1, 1, 1};
	std::vector<int> decoder_blocks = {1, 1, 1};
	int middle_blocks = 1;
	int time_embed_dim = 32;
	std::array<int, 3> dwc_kernels = {3, 5, 7};
	/// kernel size of the deformable convolutions in the prior encoder
	int deform_kernel = 3;
	/// bottleneck divisor of the prior encoder's channel attention
	int ca_reduction = 4;

	/// Full-size reference network (64 channels, four depths) with the encoder
	/// block counts read as [4, 1, 1, 1].
	static DenoiserConfig reference();
	/// As reference() but with the literal [14, 1, 1, 1] encoder.
	static DenoiserConfig reference_literal();

	void validate() const;
	/// Spatial dimensions must be multiples of this.
	int size_multiple() const { return 1 << depths; }

	bool operator==(const DenoiserConfig&) const = default;
};

nlohmann::json to_json(const DenoiserConfig& cfg);
DenoiserConfig denoiser_config_from_json(const nlohmann::json& j);

enum class ParamInit
{
	FanInUniform,
	Zero,
	One,
};

/// One trainable tensor. `layer_class` groups tensors for diagnostics and
/// gradient checks (e.g. "deform_offset", "depthwise", "layer_norm").
struct ParamSpec
{
	std::string name;
	int c = 0;
	int h = 1;
	int w = 1;
	ParamInit init = ParamInit::FanInUniform;
	int fan_in = 1;
	std::string layer_class;
};

std::vector<ParamSpec> param_layout(const DenoiserConfig& cfg);

template <typename Scalar>
nn::ParamStore<Scalar> init_params(const DenoiserConfig& cfg, std::uint64_t seed);

/// Overwrites every tensor with U(-scale, scale) draws (LN gains around 1).
/// Used to move a model off its identity initialization.
template <typename Scalar>
void randomize_params(nn::ParamStore<Scalar>& params, std::uint64_t seed, double scale);

// ---- graph-level building blocks -------------------------------------------

/// Offsets from a regular 3x3 convolution of x, then deformable sampling.
/// Parameters: <prefix>.off.{w,b} and <prefix>.{w,b}.
template <typename Scalar>
nn::Var deformable_conv_block(nn::Graph<Scalar>& g, const nn::ParamStore<Scalar>& p, const std::string& prefix,
	nn::Var x, int kernel);

/// Global pool -> bottleneck MLP -> sigmoid gate per channel.
template <typename Scalar>
nn::Var channel_attention(nn::Graph<Scalar>& g, const nn::ParamStore<Scalar>& p, const std::string& prefix, nn::Var x);

/// Terrain prior of the lifted LQ patch, (base_channels, h, w).
template <typename Scalar>
nn::Var tpe_forward(nn::Graph<Scalar>& g, const nn::ParamStore<Scalar>& p, const DenoiserConfig& cfg, nn::Var lifted);

template <typename Scalar>
nn::Tensor<Scalar> sinusoidal_embedding(int step, int dim);

/// Shared time feature: sinusoid -> linear -> GELU -> linear, (dim, 1, 1).
template <typename Scalar>
nn::Var time_features(nn::Graph<Scalar>& g, const nn::ParamStore<Scalar>& p, const DenoiserConfig& cfg, int step);

template <typename Scalar>
struct Modulation
{
	nn::Var alpha_minus_one;
	nn::Var beta;
};

/// Per-block (alpha, beta) head on the shared time feature. alpha is
/// represented as 1 + alpha_minus_one.
template <typename Scalar>
Modulation<Scalar> time_embed(nn::Graph<Scalar>& g, const nn::ParamStore<Scalar>& p, const std::string& prefix,
	nn::Var time_feature, int channels);

template <typename Scalar>
nn::Var simple_gate(nn::Graph<Scalar>& g, nn::Var x);

template <typename Scalar>
nn::Var eab_forward(nn::Graph<Scalar>& g, const nn::ParamStore<Scalar>& p, const DenoiserConfig& cfg,
	const std::string& prefix, nn::Var x, const Modulation<Scalar>& mod);

/// Full network on the tape; returns the (1, h, w) noise estimate.
/// `lifted_v` is the LQ patch already lifted to the state's grid.
template <typename Scalar>
nn::Var predict_noise(nn::Graph<Scalar>& g, const nn::ParamStore<Scalar>& p, const DenoiserConfig& cfg,
	const nn::Tensor<Scalar>& x_t, const nn::Tensor<Scalar>& lifted_v, const nn::Tensor<Scalar>& mu, int step);

/// Bicubic lift of an LQ patch to (rows, cols); identity when sizes agree.
Eigen::ArrayXXd lift_to(const Eigen::ArrayXXd& lq, Eigen::Index rows, Eigen::Index cols);

/// Frozen model for inference; evaluation records no tape.
template <typename Scalar>
class NoisePredictor
{
public:
	NoisePredictor(DenoiserConfig cfg, nn::ParamStore<Scalar> params);

	const DenoiserConfig& config() const { return cfg_; }
	const nn::ParamStore<Scalar>& params() const { return params_; }

	/// v_lq is at LQ resolution; x_t and mu share the HQ grid.
	Eigen::ArrayXXd operator()(
		const Eigen::ArrayXXd& x_t, const Eigen::ArrayXXd& v_lq, const Eigen::ArrayXXd& mu, int step) const;

	/// Same, with v already lifted to the HQ grid.
	Eigen::ArrayXXd predict_lifted(
		const Eigen::ArrayXXd& x_t, const Eigen::ArrayXXd& lifted_v, const Eigen::ArrayXXd& mu, int step) const;

private:
	DenoiserConfig cfg_;
	nn::ParamStore<Scalar> params_;
};

void check_input_shape(const DenoiserConfig& cfg, Eigen::Index rows, Eigen::Index cols);

// ---- checkpoint ---------------------------------------------------------------

struct Checkpoint
{
	DenoiserConfig config;
	DiffusionSchedule schedule;
	nn::ParamStore<double> params;
	std::int64_t step = 0;
	/// free-form metadata carried in the manifest (e.g. scale, mask preset)
	nlohmann::json meta = nlohmann::json::object();
};

inline constexpr char kCheckpointMagic[8] = {'D', 'E', 'M', 'S', 'D', 'E', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Layout: 8-byte magic, u32 version, u64 manifest length, JSON manifest
/// {config, schedule, step, meta, params: [{name, shape}]}, then f64 LE
/// payload in manifest order.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

extern template nn::ParamStore<float> init_params<float>(const DenoiserConfig&, std::uint64_t);
extern template nn::ParamStore<double> init_params<double>(const DenoiserConfig&, std::uint64_t);
extern template class NoisePredictor<float>;
extern template class NoisePredictor<double>;

} // namespace demsde
