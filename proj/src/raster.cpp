#include "demsde/raster.hpp"
#include "demsde/error.hpp"

#include "json.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace demsde {

namespace {

constexpr double kSynthBase = 500.0;
constexpr double kSynthAmplitude = 250.0;

std::uint32_t to_le(std::uint32_t v)
{
	if constexpr (std::endian::native == std::endian::big)
		return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
	return v;
}

std::string lower(std::string s)
{
	std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
	return s;
}

HeightGrid read_native(const std::filesystem::path& path)
{
	std::ifstream side(sidecar_path(path));
	if (!side)
		throw Error(ErrorCode::IoError, "cannot open sidecar " + sidecar_path(path).string());
	nlohmann::json header;
	try {
		side >> header;
	} catch (const nlohmann::json::exception& e) {
		throw Error(ErrorCode::ParseError, std::string("sidecar: ") + e.what());
	}

	Eigen::Index rows = 0, cols = 0;
	double cell = 1.0, nodata = -9999.0;
	try {
		rows = header.at("rows").get<Eigen::Index>();
		cols = header.at("cols").get<Eigen::Index>();
		cell = header.value("cell_size", 1.0);
		nodata = header.value("nodata_sentinel", -9999.0);
	} catch (const nlohmann::json::exception& e) {
		throw Error(ErrorCode::ParseError, std::string("sidecar: ") + e.what());
	}
	if (rows <= 0 || cols <= 0 || !(cell > 0.0))
		throw Error(ErrorCode::ParseError, "sidecar has non-positive dimensions or cell size");

	std::ifstream in(path, std::ios::binary);
	if (!in)
		throw Error(ErrorCode::IoError, "cannot open " + path.string());
	in.seekg(0, std::ios::end);
	const auto bytes = static_cast<std::size_t>(in.tellg());
	const auto expected = static_cast<std::size_t>(rows * cols) * sizeof(float);
	if (bytes != expected) {
		std::ostringstream msg;
		msg << path.string() << " holds " << bytes << " bytes but header implies " << expected;
		throw Error(ErrorCode::ParseError, msg.str());
	}
	in.seekg(0);

	std::vector<std::uint32_t> raw(static_cast<std::size_t>(rows * cols));
	in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(expected));
	if (!in)
		throw Error(ErrorCode::IoError, "short read on " + path.string());

	const float sentinel = static_cast<float>(nodata);
	HeightGrid grid;
	grid.values.setZero(rows, cols);
	grid.valid.setConstant(rows, cols, true);
	grid.cell_size = cell;
	for (Eigen::Index r = 0; r < rows; ++r)
		for (Eigen::Index c = 0; c < cols; ++c) {
			const float v = std::bit_cast<float>(to_le(raw[static_cast<std::size_t>(r * cols + c)]));
			if (v == sentinel || !std::isfinite(v)) {
				grid.valid(r, c) = false;
			} else {
				grid.values(r, c) = v;
			}
		}
	return grid;
}

void write_native(const HeightGrid& grid, const std::filesystem::path& path, double nodata)
{
	std::vector<std::uint32_t> raw(static_cast<std::size_t>(grid.rows() * grid.cols()));
	const float sentinel = static_cast<float>(nodata);
	for (Eigen::Index r = 0; r < grid.rows(); ++r)
		for (Eigen::Index c = 0; c < grid.cols(); ++c) {
			const float v = grid.valid(r, c) ? static_cast<float>(grid.values(r, c)) : sentinel;
			raw[static_cast<std::size_t>(r * grid.cols() + c)] = to_le(std::bit_cast<std::uint32_t>(v));
		}

	std::ofstream out(path, std::ios::binary | std::ios::trunc);
	if (!out)
		throw Error(ErrorCode::IoError, "cannot write " + path.string());
	out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(float)));
	if (!out)
		throw Error(ErrorCode::IoError, "write failed on " + path.string());

	nlohmann::json header = {
		{"rows", grid.rows()},
		{"cols", grid.cols()},
		{"cell_size", grid.cell_size},
		{"nodata_sentinel", nodata},
	};
	std::ofstream side(sidecar_path(path), std::ios::trunc);
	if (!side)
		throw Error(ErrorCode::IoError, "cannot write " + sidecar_path(path).string());
	side << header.dump(2) << "\n";
}

HeightGrid read_ascii(const std::filesystem::path& path)
{
	std::ifstream in(path);
	if (!in)
		throw Error(ErrorCode::IoError, "cannot open " + path.string());

	Eigen::Index rows = -1, cols = -1;
	double cell = 1.0;
	double nodata = -9999.0;
	bool has_nodata = false;

	// Header keys are case-insensitive and end at the first numeric token.
	std::string key;
	std::streampos data_start = in.tellg();
	while (in >> key) {
		const std::string k = lower(key);
		if (!k.empty() && (std::isdigit(static_cast<unsigned char>(k[0])) || k[0] == '-' || k[0] == '+' || k[0] == '.')) {
			in.clear();
			in.seekg(data_start);
			break;
		}
		double value = 0.0;
		if (!(in >> value))
			throw Error(ErrorCode::ParseError, "bad header value for " + key);
		if (k == "ncols")
			cols = static_cast<Eigen::Index>(value);
		else if (k == "nrows")
			rows = static_cast<Eigen::Index>(value);
		else if (k == "cellsize")
			cell = value;
		else if (k == "nodata_value") {
			nodata = value;
			has_nodata = true;
		} else if (k != "xllcorner" && k != "yllcorner" && k != "xllcenter" && k != "yllcenter")
			throw Error(ErrorCode::ParseError, "unknown header key " + key);
		data_start = in.tellg();
	}
	if (rows <= 0 || cols <= 0)
		throw Error(ErrorCode::ParseError, "missing nrows/ncols in " + path.string());
	if (!(cell > 0.0))
		throw Error(ErrorCode::ParseError, "non-positive cellsize in " + path.string());

	HeightGrid grid;
	grid.values.setZero(rows, cols);
	grid.valid.setConstant(rows, cols, true);
	grid.cell_size = cell;
	for (Eigen::Index r = 0; r < rows; ++r)
		for (Eigen::Index c = 0; c < cols; ++c) {
			double v = 0.0;
			if (!(in >> v))
				throw Error(ErrorCode::ParseError, "truncated data in " + path.string());
			if ((has_nodata && v == nodata) || !std::isfinite(v))
				grid.valid(r, c) = false;
			else
				grid.values(r, c) = v;
		}
	double extra = 0.0;
	if (in >> extra)
		throw Error(ErrorCode::ParseError, "trailing data in " + path.string());
	return grid;
}

void write_ascii(const HeightGrid& grid, const std::filesystem::path& path, double nodata)
{
	std::ofstream out(path, std::ios::trunc);
	if (!out)
		throw Error(ErrorCode::IoError, "cannot write " + path.string());
	out << std::setprecision(std::numeric_limits<double>::max_digits10);
	out << "ncols " << grid.cols() << "\n"
		<< "nrows " << grid.rows() << "\n"
		<< "xllcorner 0\n"
		<< "yllcorner 0\n"
		<< "cellsize " << grid.cell_size << "\n"
		<< "NODATA_value " << nodata << "\n";
	for (Eigen::Index r = 0; r < grid.rows(); ++r) {
		for (Eigen::Index c = 0; c < grid.cols(); ++c) {
			if (c)
				out << ' ';
			out << (grid.valid(r, c) ? grid.values(r, c) : nodata);
		}
		out << "\n";
	}
	if (!out)
		throw Error(ErrorCode::IoError, "write failed on " + path.string());
}

} // namespace

HeightGrid::HeightGrid(Eigen::ArrayXXd v, double cell)
	: values(std::move(v)), cell_size(cell)
{
	valid.setConstant(values.rows(), values.cols(), true);
}

HeightGrid::HeightGrid(Eigen::ArrayXXd v, MaskArray mask, double cell)
	: values(std::move(v)), valid(std::move(mask)), cell_size(cell)
{
}

void check_grid(const HeightGrid& grid)
{
	if (grid.rows() <= 0 || grid.cols() <= 0)
		throw Error(ErrorCode::BadParam, "grid has no cells");
	if (grid.valid.rows() != grid.rows() || grid.valid.cols() != grid.cols())
		throw Error(ErrorCode::BadParam, "valid mask dimensions differ from values");
	if (!(grid.cell_size > 0.0))
		throw Error(ErrorCode::BadParam, "cell_size must be positive");
	for (Eigen::Index c = 0; c < grid.cols(); ++c)
		for (Eigen::Index r = 0; r < grid.rows(); ++r)
			if (grid.valid(r, c) && !std::isfinite(grid.values(r, c)))
				throw Error(ErrorCode::BadParam, "non-finite value at a valid cell");
}

NormRecord norm_record(const HeightGrid& grid)
{
	double lo = std::numeric_limits<double>::infinity();
	double hi = -lo;
	for (Eigen::Index c = 0; c < grid.cols(); ++c)
		for (Eigen::Index r = 0; r < grid.rows(); ++r)
			if (grid.valid(r, c)) {
				lo = std::min(lo, grid.values(r, c));
				hi = std::max(hi, grid.values(r, c));
			}
	if (lo > hi)
		throw Error(ErrorCode::EmptyPatch, "no valid cells to normalize");
	if (!(hi > lo))
		throw Error(ErrorCode::FlatPatch, "all valid cells equal");
	return {lo, hi};
}

NormalizedPatch normalize(const HeightGrid& grid) { return normalize_with(grid, norm_record(grid)); }

NormalizedPatch normalize_with(const HeightGrid& grid, const NormRecord& record)
{
	if (!(record.hi > record.lo))
		throw Error(ErrorCode::FlatPatch, "normalization record has hi <= lo");
	NormalizedPatch out;
	out.record = record;
	out.valid = grid.valid;
	out.cell_size = grid.cell_size;
	const double inv = 1.0 / (record.hi - record.lo);
	out.values = grid.valid.select((grid.values - record.lo) * inv, 0.0);
	return out;
}

HeightGrid denormalize(const NormalizedPatch& patch)
{
	const double span = patch.record.hi - patch.record.lo;
	Eigen::ArrayXXd v = patch.valid.select(patch.values * span + patch.record.lo, 0.0);
	return HeightGrid(std::move(v), patch.valid, patch.cell_size);
}

std::pair<TileSet, TileSet> tile(const HeightGrid& grid, Eigen::Index tile_rows, Eigen::Index tile_cols,
	double train_fraction, std::uint64_t seed)
{
	if (tile_rows <= 0 || tile_cols <= 0)
		throw Error(ErrorCode::BadParam, "tile dimensions must be positive");
	if (!(train_fraction >= 0.0 && train_fraction <= 1.0))
		throw Error(ErrorCode::BadParam, "train_fraction must lie in [0,1]");
	if (grid.rows() < tile_rows || grid.cols() < tile_cols)
		throw Error(ErrorCode::GridTooSmall, "grid is smaller than one tile");

	const Eigen::Index nr = grid.rows() / tile_rows;
	const Eigen::Index nc = grid.cols() / tile_cols;
	const auto n = static_cast<std::size_t>(nr * nc);

	std::vector<std::size_t> order(n);
	std::iota(order.begin(), order.end(), std::size_t{0});
	std::mt19937_64 rng(seed);
	std::shuffle(order.begin(), order.end(), rng);
	const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
	std::vector<bool> is_train(n, false);
	for (std::size_t k = 0; k < n_train; ++k)
		is_train[order[k]] = true;

	TileSet train, test;
	for (TileSet* set : {&train, &test}) {
		set->tile_rows = tile_rows;
		set->tile_cols = tile_cols;
		set->split_seed = seed;
	}
	for (std::size_t idx = 0; idx < n; ++idx) {
		const Eigen::Index tr = static_cast<Eigen::Index>(idx) / nc;
		const Eigen::Index tc = static_cast<Eigen::Index>(idx) % nc;
		HeightGrid t(grid.values.block(tr * tile_rows, tc * tile_cols, tile_rows, tile_cols),
			grid.valid.block(tr * tile_rows, tc * tile_cols, tile_rows, tile_cols), grid.cell_size);
		TileSet& dst = is_train[idx] ? train : test;
		dst.tiles.push_back(std::move(t));
		dst.source_index.push_back(idx);
	}
	return {std::move(train), std::move(test)};
}

RasterFormat format_from_path(const std::filesystem::path& path)
{
	const std::string ext = lower(path.extension().string());
	if (ext == ".asc")
		return RasterFormat::EsriAscii;
	if (ext == ".f32" || ext == ".bin" || ext == ".raw" || ext == ".dem")
		return RasterFormat::Native;
	throw Error(ErrorCode::UnsupportedFormat, "cannot infer raster format from extension '" + ext + "'");
}

std::filesystem::path sidecar_path(const std::filesystem::path& path)
{
	std::filesystem::path p = path;
	p += ".json";
	return p;
}

HeightGrid read_raster(const std::filesystem::path& path, RasterFormat format)
{
	if (format == RasterFormat::Auto)
		format = format_from_path(path);
	if (!std::filesystem::exists(path))
		throw Error(ErrorCode::IoError, "no such file " + path.string());
	return format == RasterFormat::EsriAscii ? read_ascii(path) : read_native(path);
}

void write_raster(const HeightGrid& grid, const std::filesystem::path& path, RasterFormat format, double nodata)
{
	check_grid(grid);
	if (format == RasterFormat::Auto)
		format = format_from_path(path);
	if (format == RasterFormat::EsriAscii)
		write_ascii(grid, path, nodata);
	else
		write_native(grid, path, nodata);
}

HeightGrid synth_terrain(Eigen::Index rows, Eigen::Index cols, double roughness, std::uint64_t seed, double cell_size)
{
	if (rows < 2 || cols < 2)
		throw Error(ErrorCode::BadParam, "synth_terrain needs at least 2x2 cells");
	if (!(roughness > 0.0 && roughness < 1.0))
		throw Error(ErrorCode::BadParam, "roughness must lie in (0,1)");
	if (!(cell_size > 0.0))
		throw Error(ErrorCode::BadParam, "cell_size must be positive");

	Eigen::Index n = 2;
	while (n + 1 < std::max(rows, cols))
		n *= 2;
	const Eigen::Index size = n + 1;

	std::mt19937_64 rng(seed);
	std::uniform_real_distribution<double> unit(-1.0, 1.0);
	Eigen::ArrayXXd h = Eigen::ArrayXXd::Zero(size, size);
	h(0, 0) = kSynthBase + kSynthAmplitude * unit(rng);
	h(0, n) = kSynthBase + kSynthAmplitude * unit(rng);
	h(n, 0) = kSynthBase + kSynthAmplitude * unit(rng);
	h(n, n) = kSynthBase + kSynthAmplitude * unit(rng);

	double scale = kSynthAmplitude * roughness;
	for (Eigen::Index step = n; step > 1; step /= 2) {
		const Eigen::Index half = step / 2;
		// diamond: square centers
		for (Eigen::Index y = half; y < size; y += step)
			for (Eigen::Index x = half; x < size; x += step) {
				const double avg = 0.25 * (h(y - half, x - half) + h(y - half, x + half) + h(y + half, x - half) +
											  h(y + half, x + half));
				h(y, x) = avg + scale * unit(rng);
			}
		// square: edge midpoints. Border points average only along the border
		// so the zero-roughness limit stays exactly bilinear.
		for (Eigen::Index y = 0; y < size; y += half)
			for (Eigen::Index x = ((y / half) % 2 == 0) ? half : 0; x < size; x += step) {
				double avg;
				if (y == 0 || y == n)
					avg = 0.5 * (h(y, x - half) + h(y, x + half));
				else if (x == 0 || x == n)
					avg = 0.5 * (h(y - half, x) + h(y + half, x));
				else
					avg = 0.25 * (h(y - half, x) + h(y + half, x) + h(y, x - half) + h(y, x + half));
				h(y, x) = avg + scale * unit(rng);
			}
		scale *= roughness;
	}

	return HeightGrid(h.topLeftCorner(rows, cols), cell_size);
}

} // namespace demsde
