#include "demsde/eval.hpp"
#include "demsde/degrade.hpp"

#include <png.h>

#include <cstdio>
#include <fstream>
#include <limits>

namespace demsde {

namespace {

Eigen::VectorXd gaussian_kernel(int window, double sigma)
{
	Eigen::VectorXd k(window);
	const double c = (window - 1) / 2.0;
	for (int t = 0; t < window; ++t)
		k(t) = std::exp(-(t - c) * (t - c) / (2.0 * sigma * sigma));
	return k / k.sum();
}

// Valid-mode separable correlation with a symmetric kernel.
Eigen::ArrayXXd filter_valid(const Eigen::ArrayXXd& f, const Eigen::VectorXd& k)
{
	const Eigen::Index n = k.size();
	const Eigen::Index r = f.rows() - n + 1;
	const Eigen::Index c = f.cols() - n + 1;
	Eigen::ArrayXXd rows_done = Eigen::ArrayXXd::Zero(r, f.cols());
	for (Eigen::Index t = 0; t < n; ++t)
		rows_done += k(t) * f.middleRows(t, r);
	Eigen::ArrayXXd out = Eigen::ArrayXXd::Zero(r, c);
	for (Eigen::Index t = 0; t < n; ++t)
		out += k(t) * rows_done.middleCols(t, c);
	return out;
}

} // namespace

double ssim(const Eigen::ArrayXXd& pred, const Eigen::ArrayXXd& gt, const SsimOptions& opt)
{
	detail::require_metric_shapes(pred, gt);
	if (pred.rows() < opt.window || pred.cols() < opt.window)
		throw Error(ErrorCode::TooSmall, "SSIM needs at least " + std::to_string(opt.window) + " cells per side");
	const Eigen::VectorXd k = gaussian_kernel(opt.window, opt.sigma);
	const double c1 = std::pow(opt.k1 * opt.dynamic_range, 2);
	const double c2 = std::pow(opt.k2 * opt.dynamic_range, 2);

	const Eigen::ArrayXXd mx = filter_valid(pred, k);
	const Eigen::ArrayXXd my = filter_valid(gt, k);
	const Eigen::ArrayXXd sxx = filter_valid(pred * pred, k) - mx * mx;
	const Eigen::ArrayXXd syy = filter_valid(gt * gt, k) - my * my;
	const Eigen::ArrayXXd sxy = filter_valid(pred * gt, k) - mx * my;
	const Eigen::ArrayXXd map =
		((2.0 * mx * my + c1) * (2.0 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
	return map.mean();
}

HeightGrid fill_voids(const HeightGrid& grid, FillMethod method)
{
	check_grid(grid);
	if (grid.valid_count() == 0)
		throw Error(ErrorCode::EmptyPatch, "cannot fill a fully void grid");
	HeightGrid out = grid;
	if (grid.valid_count() == grid.valid.size())
		return out;

	std::vector<std::pair<Eigen::Index, Eigen::Index>> valid;
	for (Eigen::Index r = 0; r < grid.rows(); ++r)
		for (Eigen::Index c = 0; c < grid.cols(); ++c)
			if (grid.valid(r, c))
				valid.emplace_back(r, c);

	for (Eigen::Index r = 0; r < grid.rows(); ++r)
		for (Eigen::Index c = 0; c < grid.cols(); ++c) {
			if (grid.valid(r, c))
				continue;
			if (method == FillMethod::Nearest) {
				double best = std::numeric_limits<double>::infinity();
				double value = 0.0;
				for (auto [vr, vc] : valid) {
					const double d = double(vr - r) * double(vr - r) + double(vc - c) * double(vc - c);
					if (d < best) {
						best = d;
						value = grid.values(vr, vc);
					}
				}
				out.values(r, c) = value;
			} else {
				double num = 0.0, den = 0.0;
				for (auto [vr, vc] : valid) {
					const double w = 1.0 / (double(vr - r) * double(vr - r) + double(vc - c) * double(vc - c));
					num += w * grid.values(vr, vc);
					den += w;
				}
				out.values(r, c) = num / den;
			}
			out.valid(r, c) = true;
		}
	return out;
}

HeightGrid bicubic_baseline(const HeightGrid& d_lq, int scale, FillMethod method)
{
	return upsample_bicubic(fill_voids(d_lq, method), scale);
}

TileMetrics evaluate_tile(const HeightGrid& pred, const HeightGrid& gt, double peak)
{
	detail::require_metric_shapes(pred.values, gt.values);
	TileMetrics m;
	m.mae = mae(pred.values, gt.values);
	m.rmse = rmse(pred.values, gt.values);
	const NormRecord rec = norm_record(gt);
	const double span = rec.hi - rec.lo;
	const Eigen::ArrayXXd p = (pred.values - rec.lo) / span;
	const Eigen::ArrayXXd g = (gt.values - rec.lo) / span;
	m.psnr = psnr(p, g, peak);
	m.ssim = ssim(p, g);
	return m;
}

Evaluation evaluate(const std::vector<HeightGrid>& pred, const std::vector<HeightGrid>& gt,
	const std::string& config_digest, double peak, const std::vector<std::string>& ids)
{
	if (pred.size() != gt.size())
		throw Error(ErrorCode::DimMismatch, "prediction and ground-truth sets differ in length");
	if (!ids.empty() && ids.size() != pred.size())
		throw Error(ErrorCode::DimMismatch, "tile id list differs in length");
	Evaluation out;
	out.aggregate.config_digest = config_digest;
	out.aggregate.psnr_peak = peak;
	for (std::size_t k = 0; k < pred.size(); ++k) {
		TileMetrics m = evaluate_tile(pred[k], gt[k], peak);
		m.tile_id = ids.empty() ? std::to_string(k) : ids[k];
		out.tiles.push_back(m);
		out.aggregate.n_cells += gt[k].values.size();
	}
	out.aggregate.n_tiles = out.tiles.size();
	if (!out.tiles.empty()) {
		const double n = static_cast<double>(out.tiles.size());
		for (const auto& m : out.tiles) {
			out.aggregate.mae += m.mae / n;
			out.aggregate.rmse += m.rmse / n;
			out.aggregate.psnr += m.psnr / n;
			out.aggregate.ssim += m.ssim / n;
		}
	}
	return out;
}

void write_metrics_csv(const Evaluation& eval, const std::filesystem::path& path)
{
	std::FILE* f = std::fopen(path.string().c_str(), "w");
	if (!f)
		throw Error(ErrorCode::IoError, "cannot write " + path.string());
	std::fprintf(f, "tile_id,mae,rmse,psnr,ssim\n");
	for (const auto& m : eval.tiles)
		std::fprintf(f, "%s,%.17g,%.17g,%.17g,%.17g\n", m.tile_id.c_str(), m.mae, m.rmse, m.psnr, m.ssim);
	const auto& a = eval.aggregate;
	std::fprintf(f, "aggregate,%.17g,%.17g,%.17g,%.17g\n", a.mae, a.rmse, a.psnr, a.ssim);
	std::fclose(f);
}

nlohmann::json to_json(const MetricReport& r)
{
	return {{"mae", r.mae}, {"rmse", r.rmse}, {"psnr", r.psnr}, {"ssim", r.ssim}, {"n_cells", r.n_cells},
		{"n_tiles", r.n_tiles}, {"config_digest", r.config_digest}, {"psnr_peak", r.psnr_peak},
		{"psnr_cap", kPsnrCap}};
}

void write_report_json(const Evaluation& eval, const std::filesystem::path& path)
{
	nlohmann::json j;
	j["aggregate"] = to_json(eval.aggregate);
	j["tiles"] = nlohmann::json::array();
	for (const auto& m : eval.tiles)
		j["tiles"].push_back({{"tile_id", m.tile_id}, {"mae", m.mae}, {"rmse", m.rmse}, {"psnr", m.psnr}, {"ssim", m.ssim}});
	std::ofstream out(path);
	if (!out)
		throw Error(ErrorCode::IoError, "cannot write " + path.string());
	out << j.dump(2) << "\n";
}

void write_error_heatmap(const HeightGrid& pred, const HeightGrid& gt, const std::filesystem::path& path)
{
	detail::require_metric_shapes(pred.values, gt.values);
	const Eigen::ArrayXXd err = (pred.values - gt.values).abs();
	const double top = err.maxCoeff();
	std::vector<png_byte> pixels(static_cast<std::size_t>(err.size()));
	for (Eigen::Index r = 0; r < err.rows(); ++r)
		for (Eigen::Index c = 0; c < err.cols(); ++c)
			pixels[static_cast<std::size_t>(r * err.cols() + c)] =
				top > 0.0 ? static_cast<png_byte>(std::lround(255.0 * err(r, c) / top)) : 0;

	png_image image{};
	image.version = PNG_IMAGE_VERSION;
	image.width = static_cast<png_uint_32>(err.cols());
	image.height = static_cast<png_uint_32>(err.rows());
	image.format = PNG_FORMAT_GRAY;
	if (!png_image_write_to_file(&image, path.string().c_str(), 0, pixels.data(), 0, nullptr))
		throw Error(ErrorCode::IoError, "PNG write failed for " + path.string() + ": " + image.message);
}

std::string digest(const std::string& text)
{
	std::uint64_t h = 0xcbf29ce484222325ULL;
	for (unsigned char ch : text) {
		h ^= ch;
		h *= 0x100000001b3ULL;
	}
	char buf[17];
	std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
	return buf;
}

} // namespace demsde
