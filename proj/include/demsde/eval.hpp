#pragma once

#include "demsde/error.hpp"
#include "demsde/raster.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

namespace demsde {

inline constexpr double kPsnrCap = 99.0;

namespace detail {

template <typename A, typename B>
void require_metric_shapes(const Eigen::ArrayBase<A>& a, const Eigen::ArrayBase<B>& b)
{
	if (a.rows() != b.rows() || a.cols() != b.cols())
		throw Error(ErrorCode::DimMismatch, "metric operands differ in shape");
	if (a.size() == 0)
		throw Error(ErrorCode::EmptyPatch, "metric on an empty grid");
}

} // namespace detail

template <typename A, typename B>
double mae(const Eigen::ArrayBase<A>& pred, const Eigen::ArrayBase<B>& gt)
{
	detail::require_metric_shapes(pred, gt);
	return (pred.derived().template cast<double>() - gt.derived().template cast<double>()).abs().mean();
}

template <typename A, typename B>
double mse(const Eigen::ArrayBase<A>& pred, const Eigen::ArrayBase<B>& gt)
{
	detail::require_metric_shapes(pred, gt);
	return (pred.derived().template cast<double>() - gt.derived().template cast<double>()).square().mean();
}

template <typename A, typename B>
double rmse(const Eigen::ArrayBase<A>& pred, const Eigen::ArrayBase<B>& gt)
{
	return std::sqrt(mse(pred, gt));
}

/// 20 log10(peak) - 10 log10(mse), capped at kPsnrCap.
template <typename A, typename B>
double psnr(const Eigen::ArrayBase<A>& pred, const Eigen::ArrayBase<B>& gt, double peak = 1.0)
{
	const double m = mse(pred, gt);
	if (m <= 0.0)
		return kPsnrCap;
	return std::min(kPsnrCap, 20.0 * std::log10(peak) - 10.0 * std::log10(m));
}

struct SsimOptions
{
	int window = 11;
	double sigma = 1.5;
	double k1 = 0.01;
	double k2 = 0.03;
	double dynamic_range = 1.0;
};

/// Mean local SSIM over all fully contained Gaussian windows.
double ssim(const Eigen::ArrayXXd& pred, const Eigen::ArrayXXd& gt, const SsimOptions& opt = {});

enum class FillMethod
{
	Nearest,
	InverseDistance,
};

/// Replaces voids with the nearest valid cell (ties go to the first in
/// row-major order) or an inverse-distance-squared average of all valid cells.
HeightGrid fill_voids(const HeightGrid& grid, FillMethod method = FillMethod::Nearest);

/// Void fill then bicubic lift; the comparison baseline.
HeightGrid bicubic_baseline(const HeightGrid& d_lq, int scale, FillMethod method = FillMethod::Nearest);

struct TileMetrics
{
	std::string tile_id;
	double mae = 0.0;
	double rmse = 0.0;
	double psnr = 0.0;
	double ssim = 0.0;
};

struct MetricReport
{
	double mae = 0.0;
	double rmse = 0.0;
	double psnr = 0.0;
	double ssim = 0.0;
	std::int64_t n_cells = 0;
	std::size_t n_tiles = 0;
	std::string config_digest;
	double psnr_peak = 1.0;
};

struct Evaluation
{
	std::vector<TileMetrics> tiles;
	MetricReport aggregate;
};

/// MAE/RMSE in meters; PSNR/SSIM after mapping both grids with the ground
/// truth tile's own min-max record. Aggregates are per-tile means.
TileMetrics evaluate_tile(const HeightGrid& pred, const HeightGrid& gt, double peak = 1.0);

Evaluation evaluate(const std::vector<HeightGrid>& pred, const std::vector<HeightGrid>& gt,
	const std::string& config_digest = "", double peak = 1.0, const std::vector<std::string>& ids = {});

/// tile_id,mae,rmse,psnr,ssim plus a final "aggregate" row.
void write_metrics_csv(const Evaluation& eval, const std::filesystem::path& path);
nlohmann::json to_json(const MetricReport& report);
void write_report_json(const Evaluation& eval, const std::filesystem::path& path);

/// Grayscale PNG of |pred - gt|, 0 = no error, 255 = largest error.
void write_error_heatmap(const HeightGrid& pred, const HeightGrid& gt, const std::filesystem::path& path);

/// 64-bit FNV-1a of the text, as 16 hex digits.
std::string digest(const std::string& text);

} // namespace demsde
