#include "demsde/degrade.hpp"
#include "demsde/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>

namespace demsde {

namespace {

constexpr double kCubicA = -0.5;
constexpr int kSeedPlacementAttempts = 1000;

Eigen::Index reflect(Eigen::Index i, Eigen::Index n)
{
	if (n == 1)
		return 0;
	const Eigen::Index period = 2 * (n - 1);
	i %= period;
	if (i < 0)
		i += period;
	return i < n ? i : period - i;
}

// Resamples along the first axis only.
Eigen::ArrayXXd upsample_rows(const Eigen::ArrayXXd& in, int scale)
{
	const Eigen::Index n = in.rows();
	Eigen::ArrayXXd out(n * scale, in.cols());
	for (Eigen::Index o = 0; o < out.rows(); ++o) {
		const double s = (static_cast<double>(o) + 0.5) / scale - 0.5;
		const auto base = static_cast<Eigen::Index>(std::floor(s));
		const double t = s - static_cast<double>(base);
		out.row(o).setZero();
		for (int k = -1; k <= 2; ++k)
			out.row(o) += catmull_rom(t - k) * in.row(reflect(base + k, n));
	}
	return out;
}

struct Square
{
	Eigen::Index r0, c0;
};

Square place(Eigen::Index r, Eigen::Index c, int side, Eigen::Index rows, Eigen::Index cols)
{
	const Eigen::Index half = (side - 1) / 2;
	return {std::clamp<Eigen::Index>(r - half, 0, rows - side), std::clamp<Eigen::Index>(c - half, 0, cols - side)};
}

bool overlaps(const Square& a, const Square& b, int side)
{
	return a.r0 < b.r0 + side && b.r0 < a.r0 + side && a.c0 < b.c0 + side && b.c0 < a.c0 + side;
}

} // namespace

MaskSpec parse_mask_preset(std::string_view name)
{
	if (name == "none" || name == "NONE")
		return {0, 0, 1};
	if (name.size() != 5 || (name[0] != 'M' && name[0] != 'm') || name[1] != '-' ||
		!std::isdigit(static_cast<unsigned char>(name[2])) || !std::isdigit(static_cast<unsigned char>(name[3])) ||
		!std::isdigit(static_cast<unsigned char>(name[4])))
		throw Error(ErrorCode::BadParam, "mask preset must look like M-<n><t><r>, got '" + std::string(name) + "'");
	MaskSpec spec{name[2] - '0', name[3] - '0', name[4] - '0'};
	if (spec.r_v < 1)
		throw Error(ErrorCode::BadParam, "mask preset square side must be >= 1");
	return spec;
}

std::string mask_preset_name(const MaskSpec& spec)
{
	if (spec.n_center == 0)
		return "none";
	if (spec.n_center > 9 || spec.t_walk > 9 || spec.r_v > 9)
		return std::to_string(spec.n_center) + "," + std::to_string(spec.t_walk) + "," + std::to_string(spec.r_v);
	return "M-" + std::to_string(spec.n_center) + std::to_string(spec.t_walk) + std::to_string(spec.r_v);
}

HeightGrid downsample(const HeightGrid& hq, int scale)
{
	if (scale < 1)
		throw Error(ErrorCode::BadParam, "scale must be >= 1");
	if (hq.rows() % scale != 0 || hq.cols() % scale != 0)
		throw Error(ErrorCode::NotDivisible, "grid dimensions are not divisible by the scale");

	const Eigen::Index rows = hq.rows() / scale;
	const Eigen::Index cols = hq.cols() / scale;
	HeightGrid lq(Eigen::ArrayXXd::Zero(rows, cols), MaskArray::Constant(rows, cols, false), hq.cell_size * scale);
	for (Eigen::Index c = 0; c < cols; ++c)
		for (Eigen::Index r = 0; r < rows; ++r) {
			double sum = 0.0;
			int n = 0;
			for (int dc = 0; dc < scale; ++dc)
				for (int dr = 0; dr < scale; ++dr) {
					const Eigen::Index hr = r * scale + dr;
					const Eigen::Index hc = c * scale + dc;
					if (hq.valid(hr, hc)) {
						sum += hq.values(hr, hc);
						++n;
					}
				}
			if (n > 0) {
				lq.values(r, c) = sum / n;
				lq.valid(r, c) = true;
			}
		}
	return lq;
}

double catmull_rom(double x)
{
	const double ax = std::abs(x);
	if (ax <= 1.0)
		return ((kCubicA + 2.0) * ax - (kCubicA + 3.0)) * ax * ax + 1.0;
	if (ax < 2.0)
		return ((kCubicA * ax - 5.0 * kCubicA) * ax + 8.0 * kCubicA) * ax - 4.0 * kCubicA;
	return 0.0;
}

Eigen::ArrayXXd upsample_bicubic(const Eigen::ArrayXXd& lq, int scale)
{
	if (scale < 1)
		throw Error(ErrorCode::BadParam, "scale must be >= 1");
	if (lq.rows() < 4 || lq.cols() < 4)
		throw Error(ErrorCode::TooSmall, "bicubic upsampling needs at least 4x4 cells");
	if (scale == 1)
		return lq;
	Eigen::ArrayXXd tmp = upsample_rows(lq, scale);
	Eigen::ArrayXXd out = upsample_rows(tmp.transpose().eval(), scale);
	return out.transpose();
}

HeightGrid upsample_bicubic(const HeightGrid& lq, int scale)
{
	return HeightGrid(upsample_bicubic(lq.values, scale), lq.cell_size / scale);
}

VoidMask gen_void_mask(const MaskSpec& spec, Eigen::Index rows, Eigen::Index cols, std::uint64_t seed)
{
	if (spec.n_center < 0 || spec.t_walk < 0 || spec.r_v < 1)
		throw Error(ErrorCode::BadParam, "mask spec counts must be non-negative and r_v >= 1");
	if (rows <= 0 || cols <= 0 || spec.r_v > std::min(rows, cols))
		throw Error(ErrorCode::BadParam, "void square does not fit in the grid");

	VoidMask out{MaskArray::Constant(rows, cols, false)};
	if (spec.n_center == 0)
		return out;

	std::mt19937_64 rng(seed);
	std::uniform_int_distribution<Eigen::Index> pick_r(0, rows - 1);
	std::uniform_int_distribution<Eigen::Index> pick_c(0, cols - 1);
	std::uniform_int_distribution<int> pick_dir(0, 3);

	// Seed squares are drawn disjoint when the grid has room; otherwise the
	// last draw is kept and squares merge.
	std::vector<std::pair<Eigen::Index, Eigen::Index>> centers;
	std::vector<Square> seeds;
	for (int k = 0; k < spec.n_center; ++k) {
		Eigen::Index r = 0, c = 0;
		for (int attempt = 0; attempt < kSeedPlacementAttempts; ++attempt) {
			r = pick_r(rng);
			c = pick_c(rng);
			const Square sq = place(r, c, spec.r_v, rows, cols);
			if (std::none_of(seeds.begin(), seeds.end(), [&](const Square& s) { return overlaps(s, sq, spec.r_v); }))
				break;
		}
		centers.emplace_back(r, c);
		seeds.push_back(place(r, c, spec.r_v, rows, cols));
	}

	auto stamp = [&](Eigen::Index r, Eigen::Index c) {
		const Square sq = place(r, c, spec.r_v, rows, cols);
		out.mask.block(sq.r0, sq.c0, spec.r_v, spec.r_v).setConstant(true);
	};

	static constexpr int dr[4] = {-1, 1, 0, 0};
	static constexpr int dc[4] = {0, 0, -1, 1};
	for (auto [r, c] : centers) {
		stamp(r, c);
		for (int step = 0; step < spec.t_walk; ++step) {
			const int d = pick_dir(rng);
			r = std::clamp<Eigen::Index>(r + dr[d], 0, rows - 1);
			c = std::clamp<Eigen::Index>(c + dc[d], 0, cols - 1);
			stamp(r, c);
		}
	}
	return out;
}

NormalizedPatch apply_voids(const NormalizedPatch& patch, const VoidMask& mask)
{
	if (mask.mask.rows() != patch.rows() || mask.mask.cols() != patch.cols())
		throw Error(ErrorCode::DimMismatch, "void mask and patch dimensions differ");
	NormalizedPatch out = patch;
	out.valid = patch.valid && !mask.mask;
	out.values = mask.mask.select(0.0, patch.values);
	return out;
}

VoidMask expand_mask(const VoidMask& mask, int scale)
{
	VoidMask out{MaskArray(mask.mask.rows() * scale, mask.mask.cols() * scale)};
	for (Eigen::Index c = 0; c < out.mask.cols(); ++c)
		for (Eigen::Index r = 0; r < out.mask.rows(); ++r)
			out.mask(r, c) = mask.mask(r / scale, c / scale);
	return out;
}

PatchPair make_pair(const HeightGrid& hq, int scale, const MaskSpec& spec, std::uint64_t seed)
{
	check_grid(hq);
	if (hq.valid_count() != hq.values.size())
		throw Error(ErrorCode::BadParam, "make_pair needs a fully valid HQ grid");

	const HeightGrid lq = downsample(hq, scale);
	const NormalizedPatch lq_norm = normalize(lq);
	const VoidMask lq_mask = gen_void_mask(spec, lq.rows(), lq.cols(), seed);

	PatchPair pair;
	pair.scale = scale;
	pair.d_lq = apply_voids(lq_norm, lq_mask);
	pair.d_hq = normalize_with(hq, lq_norm.record);
	pair.mask_hq = expand_mask(lq_mask, scale);

	pair.mu.values = scale == 1 ? pair.d_lq.values : upsample_bicubic(pair.d_lq.values, scale);
	pair.mu.valid = MaskArray::Constant(hq.rows(), hq.cols(), true);
	pair.mu.record = lq_norm.record;
	pair.mu.cell_size = hq.cell_size;
	return pair;
}

} // namespace demsde
