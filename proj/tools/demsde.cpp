// demsde command-line front end.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
// Every command writes the configuration it actually ran with next to its
// primary output as <output>.run.json (train: <dir>/run.json).

#include "demsde/degrade.hpp"
#include "demsde/eval.hpp"
#include "demsde/raster.hpp"
#include "demsde/sampling.hpp"
#include "demsde/sde.hpp"
#include "demsde/training.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit : int
{
	kOk = 0,
	kUsage = 1,
	kData = 2,
	kNumeric = 3,
};

constexpr const char* kDataDirEnv = "DEMSDE_DATA_DIR";

/// Relative inputs that do not exist under the working directory are looked
/// up under $DEMSDE_DATA_DIR.
fs::path resolve_input(const fs::path& p)
{
	if (p.is_absolute() || fs::exists(p))
		return p;
	if (const char* dir = std::getenv(kDataDirEnv); dir && *dir) {
		fs::path alt = fs::path(dir) / p;
		if (fs::exists(alt) || fs::exists(demsde::sidecar_path(alt)))
			return alt;
	}
	return p;
}

json load_json_file(const fs::path& path)
{
	std::ifstream in(path);
	if (!in)
		throw demsde::Error(demsde::ErrorCode::IoError, "cannot open " + path.string());
	try {
		return json::parse(in);
	} catch (const json::exception& e) {
		throw demsde::Error(demsde::ErrorCode::ParseError, path.string() + ": " + e.what());
	}
}

void write_run_json(const fs::path& path, json run)
{
	std::ofstream out(path);
	if (!out)
		throw demsde::Error(demsde::ErrorCode::IoError, "cannot write " + path.string());
	out << run.dump(2) << "\n";
}

fs::path run_json_for(const fs::path& output)
{
	return fs::path(output.string() + ".run.json");
}

struct ScheduleOpts
{
	int T = 50;
	double lambda = demsde::kDefaultLambda;
	std::string profile = "cosine";
	double terminal_decay = demsde::kDefaultTerminalDecay;

	void add(CLI::App* cmd)
	{
		cmd->add_option("--T,--steps", T, "Number of diffusion steps")->check(CLI::PositiveNumber);
		cmd->add_option("--lambda", lambda, "Stationary standard deviation")->check(CLI::PositiveNumber);
		cmd->add_option("--profile", profile, "theta profile: cosine or constant");
		cmd->add_option("--terminal-decay", terminal_decay, "exp(-theta_bar_T)");
	}
	demsde::DiffusionSchedule make() const
	{
		return demsde::make_schedule(T, lambda, demsde::parse_profile(profile), terminal_decay);
	}
};

// ---- synth ----------------------------------------------------------------------

struct SynthOpts
{
	int rows = 256;
	int cols = 256;
	double roughness = 0.5;
	double cell = 2.0;
	std::uint64_t seed = 0;
	fs::path output;
};

int cmd_synth(const SynthOpts& o)
{
	const auto grid = demsde::synth_terrain(o.rows, o.cols, o.roughness, o.seed, o.cell);
	demsde::write_raster(grid, o.output);
	write_run_json(run_json_for(o.output), {{"command", "synth"}, {"rows", o.rows}, {"cols", o.cols},
		{"roughness", o.roughness}, {"cell_size", o.cell}, {"seed", o.seed}, {"output", o.output.string()}});
	return kOk;
}

// ---- mask-gen -------------------------------------------------------------------

struct MaskOpts
{
	std::string preset = "M-311";
	int rows = 64;
	int cols = 64;
	std::uint64_t seed = 0;
	fs::path output;
};

int cmd_mask_gen(const MaskOpts& o)
{
	const auto spec = demsde::parse_mask_preset(o.preset);
	const auto mask = demsde::gen_void_mask(spec, o.rows, o.cols, o.seed);
	demsde::write_raster(demsde::HeightGrid(mask.mask.cast<double>()), o.output);
	write_run_json(run_json_for(o.output),
		{{"command", "mask-gen"}, {"preset", demsde::mask_preset_name(spec)}, {"rows", o.rows}, {"cols", o.cols},
			{"seed", o.seed}, {"void_count", mask.void_count()}, {"output", o.output.string()}});
	return kOk;
}

// ---- degrade --------------------------------------------------------------------

struct DegradeOpts
{
	fs::path input;
	int scale = 2;
	std::string preset = "M-311";
	std::uint64_t seed = 0;
	fs::path output;
	fs::path mask_output;
};

int cmd_degrade(const DegradeOpts& o)
{
	const fs::path in = resolve_input(o.input);
	const auto hq = demsde::read_raster(in);
	const auto spec = demsde::parse_mask_preset(o.preset);
	auto lq = demsde::downsample(hq, o.scale);
	const auto voids = demsde::gen_void_mask(spec, lq.rows(), lq.cols(), o.seed);
	lq.valid = lq.valid && !voids.mask;
	lq.values = lq.valid.select(lq.values, 0.0);
	demsde::write_raster(lq, o.output);
	if (!o.mask_output.empty())
		demsde::write_raster(demsde::HeightGrid(voids.mask.cast<double>()), o.mask_output);
	write_run_json(run_json_for(o.output),
		{{"command", "degrade"}, {"input", in.string()}, {"scale", o.scale},
			{"preset", demsde::mask_preset_name(spec)}, {"seed", o.seed}, {"output", o.output.string()},
			{"mask_output", o.mask_output.string()}, {"rows", lq.rows()}, {"cols", lq.cols()},
			{"void_count", voids.void_count()}});
	return kOk;
}

// ---- train ----------------------------------------------------------------------

struct TrainOpts
{
	fs::path input;
	fs::path output;
	fs::path config;
	std::string model_preset = "desk";
	int tile = 64;
	double train_fraction = 0.9;
	ScheduleOpts sched;
	std::optional<int> iterations;
	std::optional<int> batch_size;
	std::optional<double> lr;
	std::optional<double> edge_weight;
	std::optional<int> scale;
	std::optional<std::string> preset;
	std::optional<int> checkpoint_every;
	std::optional<int> validate_every;
	std::uint64_t seed = 0;
	int threads = 1;
	int log_every = 100;
};

int cmd_train(const TrainOpts& o, const CLI::App& sub)
{
	json file = o.config.empty() ? json::object() : load_json_file(resolve_input(o.config));

	demsde::DenoiserConfig model;
	if (o.model_preset == "reference")
		model = demsde::DenoiserConfig::reference();
	else if (o.model_preset != "desk")
		throw demsde::Error(demsde::ErrorCode::BadParam, "unknown model preset '" + o.model_preset + "'");
	if (file.contains("model"))
		model = demsde::denoiser_config_from_json(file["model"]);

	// command-line schedule flags win over the config file only when given
	demsde::DiffusionSchedule sched = o.sched.make();
	const bool sched_flags = sub.count("--T") || sub.count("--lambda") || sub.count("--profile") ||
							 sub.count("--terminal-decay");
	if (file.contains("schedule") && !sched_flags)
		sched = demsde::schedule_from_json(file["schedule"]);

	demsde::TrainConfig cfg = file.contains("train") ? demsde::train_config_from_json(file["train"]) : demsde::TrainConfig{};
	if (o.iterations)
		cfg.iterations = *o.iterations;
	if (o.batch_size)
		cfg.batch_size = *o.batch_size;
	if (o.lr)
		cfg.lr_init = *o.lr;
	if (o.edge_weight)
		cfg.edge_weight = *o.edge_weight;
	if (o.scale)
		cfg.scale = *o.scale;
	if (o.preset)
		cfg.mask_preset = *o.preset;
	if (o.checkpoint_every)
		cfg.checkpoint_every = *o.checkpoint_every;
	if (o.validate_every)
		cfg.validate_every = *o.validate_every;
	if (sub.count("--seed") || !file.contains("train"))
		cfg.seed = o.seed;
	cfg.threads = o.threads;

	const fs::path in = resolve_input(o.input);
	const auto grid = demsde::read_raster(in);
	auto [train_set, val_set] = demsde::tile(grid, o.tile, o.tile, o.train_fraction, cfg.seed);

	fs::create_directories(o.output);
	write_run_json(o.output / "run.json",
		{{"command", "train"}, {"input", in.string()}, {"tile", o.tile}, {"train_fraction", o.train_fraction},
			{"train_tiles", train_set.size()}, {"val_tiles", val_set.size()}, {"model", demsde::to_json(model)},
			{"schedule", demsde::schedule_to_json(sched)}, {"train", demsde::to_json(cfg)},
			{"output", o.output.string()}});

	demsde::TrainOutputs outputs;
	outputs.dir = o.output;
	const int log_every = o.log_every;
	outputs.on_step = [log_every](const demsde::StepReport& r) {
		if (log_every > 0 && r.step % log_every == 0)
			std::cerr << "step " << r.step << "  loss " << r.loss << "  l_sde " << r.l_sde << "  l_edge " << r.l_edge
					  << "  lr " << r.lr << "\n";
	};
	demsde::train(train_set, val_set, sched, model, cfg, outputs);
	return kOk;
}

// ---- restore --------------------------------------------------------------------

struct RestoreOpts
{
	fs::path input;
	fs::path checkpoint;
	std::string method = "sde";
	std::string mode = "optimal";
	int scale = 0;
	int steps = 0;
	bool stochastic = false;
	std::string fill = "nearest";
	std::uint64_t seed = 0;
	int threads = 1;
	fs::path output;
};

demsde::FillMethod parse_fill(const std::string& name)
{
	if (name == "nearest")
		return demsde::FillMethod::Nearest;
	if (name == "idw")
		return demsde::FillMethod::InverseDistance;
	throw demsde::Error(demsde::ErrorCode::BadParam, "unknown fill method '" + name + "'");
}

int cmd_restore(const RestoreOpts& o)
{
	const fs::path in = resolve_input(o.input);
	const auto lq = demsde::read_raster(in);
	json run = {{"command", "restore"}, {"input", in.string()}, {"method", o.method}, {"output", o.output.string()}};

	demsde::HeightGrid out;
	if (o.method == "bicubic") {
		if (o.scale < 1)
			throw demsde::Error(demsde::ErrorCode::BadParam, "--scale is required for the bicubic method");
		out = demsde::bicubic_baseline(lq, o.scale, parse_fill(o.fill));
		run["scale"] = o.scale;
		run["fill"] = o.fill;
	} else if (o.method == "sde") {
		if (o.checkpoint.empty())
			throw demsde::Error(demsde::ErrorCode::BadParam, "--checkpoint is required for the sde method");
		const fs::path ck = resolve_input(o.checkpoint);
		const auto model = demsde::load_checkpoint(ck);
		demsde::SamplerConfig cfg;
		cfg.T = o.steps;
		cfg.mode = demsde::parse_sampler_mode(o.mode);
		cfg.stochastic = o.stochastic;
		cfg.seed = o.seed;
		cfg.scale = o.scale;
		cfg.threads = o.threads;
		const auto sched = demsde::sampling_schedule(model, cfg);
		cfg.T = sched.steps();
		cfg.scale = demsde::checkpoint_scale(model, cfg);
		out = demsde::restore(lq, model, sched, cfg);
		run["checkpoint"] = ck.string();
		run["sampler"] = demsde::to_json(cfg);
		run["schedule"] = demsde::schedule_to_json(sched);
	} else {
		throw demsde::Error(demsde::ErrorCode::BadParam, "unknown method '" + o.method + "'");
	}
	demsde::write_raster(out, o.output);
	write_run_json(run_json_for(o.output), run);
	return kOk;
}

// ---- evaluate -------------------------------------------------------------------

struct EvalOpts
{
	std::vector<fs::path> pred;
	std::vector<fs::path> gt;
	fs::path output;
	fs::path report;
	fs::path heatmap;
	double peak = 1.0;
};

int cmd_evaluate(const EvalOpts& o)
{
	if (o.pred.size() != o.gt.size())
		throw demsde::Error(demsde::ErrorCode::BadParam, "--pred and --gt need the same number of rasters");
	std::vector<demsde::HeightGrid> pred, gt;
	std::vector<std::string> ids;
	json run = {{"command", "evaluate"}, {"peak", o.peak}, {"output", o.output.string()}};
	for (std::size_t k = 0; k < o.pred.size(); ++k) {
		const fs::path p = resolve_input(o.pred[k]);
		const fs::path g = resolve_input(o.gt[k]);
		pred.push_back(demsde::read_raster(p));
		gt.push_back(demsde::read_raster(g));
		ids.push_back(o.pred[k].filename().string());
		run["pairs"].push_back({p.string(), g.string()});
	}
	const auto result = demsde::evaluate(pred, gt, demsde::digest(run.dump()), o.peak, ids);
	demsde::write_metrics_csv(result, o.output);
	if (!o.report.empty())
		demsde::write_report_json(result, o.report);
	if (!o.heatmap.empty())
		demsde::write_error_heatmap(pred.front(), gt.front(), o.heatmap);
	run["report"] = o.report.string();
	run["heatmap"] = o.heatmap.string();
	write_run_json(run_json_for(o.output), run);

	const auto& a = result.aggregate;
	std::cout << "tiles " << a.n_tiles << "  mae " << a.mae << "  rmse " << a.rmse << "  psnr " << a.psnr << "  ssim "
			  << a.ssim << "\n";
	return kOk;
}

// ---- simulate-sde ---------------------------------------------------------------

struct SimOpts
{
	ScheduleOpts sched;
	double x0 = 1.0;
	double mu = 0.0;
	int paths = 20000;
	std::uint64_t seed = 0;
	fs::path output;
};

/// Monte Carlo through the exact forward kernel; one CSV row per step with
/// the sample mean's deviation from the closed-form mean and the sample std.
int cmd_simulate_sde(const SimOpts& o)
{
	if (o.paths < 2)
		throw demsde::Error(demsde::ErrorCode::BadParam, "--paths must be at least 2");
	const auto sched = o.sched.make();
	std::mt19937_64 rng(o.seed);
	std::normal_distribution<double> gauss;

	const Eigen::ArrayXXd mu = Eigen::ArrayXXd::Constant(o.paths, 1, o.mu);
	Eigen::ArrayXXd x = Eigen::ArrayXXd::Constant(o.paths, 1, o.x0);
	Eigen::ArrayXXd noise(o.paths, 1);

	std::ostringstream csv;
	csv.precision(10);
	csv << "i,mean_err,std\n";
	csv << 0 << "," << 0.0 << "," << 0.0 << "\n";
	for (int i = 1; i <= sched.steps(); ++i) {
		for (Eigen::Index k = 0; k < noise.size(); ++k)
			noise(k) = gauss(rng);
		x = demsde::forward_transition(x, mu, sched, i, noise).x;
		if (!x.allFinite())
			throw demsde::Error(demsde::ErrorCode::NonFiniteState, "path left the reals at step " + std::to_string(i));
		const double mean = x.mean();
		const double expect = o.mu + (o.x0 - o.mu) * std::exp(-sched.theta_bar(i));
		const double sd = std::sqrt((x - mean).square().sum() / static_cast<double>(o.paths - 1));
		csv << i << "," << mean - expect << "," << sd << "\n";
	}

	json run = {{"command", "simulate-sde"}, {"schedule", demsde::schedule_to_json(sched)}, {"x0", o.x0},
		{"mu", o.mu}, {"paths", o.paths}, {"seed", o.seed}, {"output", o.output.string()}};
	if (o.output.empty()) {
		std::cout << csv.str();
		return kOk;
	}
	std::ofstream out(o.output);
	if (!out)
		throw demsde::Error(demsde::ErrorCode::IoError, "cannot write " + o.output.string());
	out << csv.str();
	write_run_json(run_json_for(o.output), run);
	return kOk;
}

int exit_for(demsde::ErrorCode code)
{
	switch (demsde::classify(code)) {
	case demsde::ErrorClass::Usage:
		return kUsage;
	case demsde::ErrorClass::Data:
		return kData;
	case demsde::ErrorClass::Numeric:
		return kNumeric;
	}
	return kData;
}

} // namespace

int main(int argc, char** argv)
{
	CLI::App app{"Mean-reverting SDE super-resolution and void filling for elevation rasters"};
	app.require_subcommand(1);
	app.set_version_flag("--version", "demsde 1.0");

	SynthOpts synth;
	auto* c_synth = app.add_subcommand("synth", "Generate a diamond-square terrain raster");
	c_synth->add_option("--rows", synth.rows)->check(CLI::PositiveNumber);
	c_synth->add_option("--cols", synth.cols)->check(CLI::PositiveNumber);
	c_synth->add_option("--roughness", synth.roughness)->check(CLI::Range(0.0, 1.0));
	c_synth->add_option("--cell-size", synth.cell)->check(CLI::PositiveNumber);
	c_synth->add_option("--seed", synth.seed);
	c_synth->add_option("-o,--output", synth.output)->required();

	MaskOpts mask;
	auto* c_mask = app.add_subcommand("mask-gen", "Generate a random-walk void mask (1 = void)");
	c_mask->add_option("--preset", mask.preset, "M-<n><t><r> or none");
	c_mask->add_option("--rows", mask.rows)->check(CLI::PositiveNumber);
	c_mask->add_option("--cols", mask.cols)->check(CLI::PositiveNumber);
	c_mask->add_option("--seed", mask.seed);
	c_mask->add_option("-o,--output", mask.output)->required();

	DegradeOpts deg;
	auto* c_deg = app.add_subcommand("degrade", "Block-mean downsample and punch voids");
	c_deg->add_option("-i,--input", deg.input)->required();
	c_deg->add_option("--scale", deg.scale)->check(CLI::PositiveNumber);
	c_deg->add_option("--preset", deg.preset);
	c_deg->add_option("--seed", deg.seed);
	c_deg->add_option("-o,--output", deg.output)->required();
	c_deg->add_option("--mask-output", deg.mask_output, "Also write the LQ void mask");

	TrainOpts tr;
	auto* c_train = app.add_subcommand("train", "Train the noise predictor on tiles of a raster");
	c_train->add_option("-i,--input", tr.input, "HQ raster to tile")->required();
	c_train->add_option("-o,--output", tr.output, "Output directory")->required();
	c_train->add_option("--config", tr.config, "JSON with optional model/schedule/train sections");
	c_train->add_option("--model", tr.model_preset, "desk or reference");
	c_train->add_option("--tile", tr.tile)->check(CLI::PositiveNumber);
	c_train->add_option("--train-fraction", tr.train_fraction)->check(CLI::Range(0.0, 1.0));
	tr.sched.add(c_train);
	c_train->add_option("--iterations", tr.iterations);
	c_train->add_option("--batch-size", tr.batch_size);
	c_train->add_option("--lr", tr.lr);
	c_train->add_option("--edge-weight", tr.edge_weight);
	c_train->add_option("--scale", tr.scale);
	c_train->add_option("--preset", tr.preset);
	c_train->add_option("--checkpoint-every", tr.checkpoint_every);
	c_train->add_option("--validate-every", tr.validate_every);
	c_train->add_option("--seed", tr.seed);
	c_train->add_option("--threads", tr.threads)->check(CLI::PositiveNumber);
	c_train->add_option("--log-every", tr.log_every);

	RestoreOpts rs;
	auto* c_rs = app.add_subcommand("restore", "Super-resolve and void-fill an LQ raster");
	c_rs->add_option("-i,--input", rs.input)->required();
	c_rs->add_option("--checkpoint", rs.checkpoint);
	c_rs->add_option("--method", rs.method, "sde or bicubic");
	c_rs->add_option("--mode", rs.mode, "optimal or euler");
	c_rs->add_option("--scale", rs.scale, "0 takes the checkpoint's scale");
	c_rs->add_option("--steps", rs.steps, "0 takes the checkpoint's T");
	c_rs->add_flag("--stochastic", rs.stochastic);
	c_rs->add_option("--fill", rs.fill, "bicubic void fill: nearest or idw");
	c_rs->add_option("--seed", rs.seed);
	c_rs->add_option("--threads", rs.threads)->check(CLI::PositiveNumber);
	c_rs->add_option("-o,--output", rs.output)->required();

	EvalOpts ev;
	auto* c_ev = app.add_subcommand("evaluate", "Per-tile and aggregate metrics");
	c_ev->add_option("--pred", ev.pred)->required();
	c_ev->add_option("--gt", ev.gt)->required();
	c_ev->add_option("-o,--output", ev.output, "Per-tile CSV")->required();
	c_ev->add_option("--report", ev.report, "Aggregate JSON");
	c_ev->add_option("--heatmap", ev.heatmap, "PNG error map of the first pair");
	c_ev->add_option("--peak", ev.peak)->check(CLI::PositiveNumber);

	SimOpts sim;
	auto* c_sim = app.add_subcommand("simulate-sde", "Monte Carlo of the forward process; CSV i,mean_err,std");
	sim.sched.T = 100;
	sim.sched.add(c_sim);
	c_sim->add_option("--x0", sim.x0);
	c_sim->add_option("--mu", sim.mu);
	c_sim->add_option("--paths", sim.paths);
	c_sim->add_option("--seed", sim.seed);
	c_sim->add_option("-o,--output", sim.output, "CSV path; stdout when omitted");

	try {
		app.parse(argc, argv);
	} catch (const CLI::ParseError& e) {
		const int rc = app.exit(e);
		return rc == 0 ? kOk : kUsage;
	}

	try {
		if (c_synth->parsed())
			return cmd_synth(synth);
		if (c_mask->parsed())
			return cmd_mask_gen(mask);
		if (c_deg->parsed())
			return cmd_degrade(deg);
		if (c_train->parsed())
			return cmd_train(tr, *c_train);
		if (c_rs->parsed())
			return cmd_restore(rs);
		if (c_ev->parsed())
			return cmd_evaluate(ev);
		if (c_sim->parsed())
			return cmd_simulate_sde(sim);
	} catch (const demsde::Error& e) {
		std::cerr << "error: " << e.what() << "\n";
		return exit_for(e.code());
	} catch (const fs::filesystem_error& e) {
		std::cerr << "error: " << e.what() << "\n";
		return kData;
	} catch (const json::exception& e) {
		std::cerr << "error: " << e.what() << "\n";
		return kData;
	} catch (const std::exception& e) {
		std::cerr << "error: " << e.what() << "\n";
		return kData;
	}
	return kUsage;
}
