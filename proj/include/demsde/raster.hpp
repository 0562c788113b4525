#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

namespace demsde {

using MaskArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Elevation raster in meters. Cells with valid == false are voids; their
/// value is unspecified and conventionally 0.
struct HeightGrid
{
	Eigen::ArrayXXd values;
	MaskArray valid;
	double cell_size = 1.0;

	HeightGrid() = default;
	HeightGrid(Eigen::ArrayXXd v, double cell = 1.0);
	HeightGrid(Eigen::ArrayXXd v, MaskArray mask, double cell = 1.0);

	Eigen::Index rows() const { return values.rows(); }
	Eigen::Index cols() const { return values.cols(); }
	Eigen::Index valid_count() const { return valid.count(); }
};

/// Throws BadParam if any structural invariant is broken.
void check_grid(const HeightGrid& grid);

struct NormRecord
{
	double lo = 0.0;
	double hi = 1.0;
};

struct NormalizedPatch
{
	Eigen::ArrayXXd values;
	MaskArray valid;
	NormRecord record;
	double cell_size = 1.0;

	Eigen::Index rows() const { return values.rows(); }
	Eigen::Index cols() const { return values.cols(); }
};

/// Per-patch min/max over valid cells. Throws EmptyPatch or FlatPatch.
NormRecord norm_record(const HeightGrid& grid);

/// Min-max map to [0,1] using the grid's own valid range; voids become 0.
NormalizedPatch normalize(const HeightGrid& grid);

/// Same affine map with an externally supplied record (values may leave [0,1]).
NormalizedPatch normalize_with(const HeightGrid& grid, const NormRecord& record);

HeightGrid denormalize(const NormalizedPatch& patch);

struct TileSet
{
	std::vector<HeightGrid> tiles;
	/// Row-major tile index in the source grid, parallel to tiles.
	std::vector<std::size_t> source_index;
	Eigen::Index tile_rows = 0;
	Eigen::Index tile_cols = 0;
	std::uint64_t split_seed = 0;

	std::size_t size() const { return tiles.size(); }
	bool empty() const { return tiles.empty(); }
};

/// Non-overlapping tiles in row-major order; edge remainders are dropped.
/// round(train_fraction * n) tiles go to the training set, chosen by a
/// seeded shuffle; both sets keep row-major order.
std::pair<TileSet, TileSet> tile(const HeightGrid& grid, Eigen::Index tile_rows, Eigen::Index tile_cols,
	double train_fraction, std::uint64_t seed);

enum class RasterFormat
{
	Auto,
	Native,
	EsriAscii,
};

RasterFormat format_from_path(const std::filesystem::path& path);

/// Native format: little-endian f32 row-major payload at `path` plus a JSON
/// sidecar at `path + ".json"` holding rows, cols, cell_size, nodata_sentinel.
HeightGrid read_raster(const std::filesystem::path& path, RasterFormat format = RasterFormat::Auto);
void write_raster(const HeightGrid& grid, const std::filesystem::path& path, RasterFormat format = RasterFormat::Auto,
	double nodata = -9999.0);

std::filesystem::path sidecar_path(const std::filesystem::path& path);

/// Diamond-square fractal surface. Generated on the smallest 2^n+1 square
/// covering (rows, cols) and cropped from its top-left corner. The
/// perturbation amplitude is multiplied by `roughness` at each level.
HeightGrid synth_terrain(Eigen::Index rows, Eigen::Index cols, double roughness, std::uint64_t seed,
	double cell_size = 2.0);

} // namespace demsde
