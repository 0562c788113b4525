#pragma once

#include "demsde/raster.hpp"

#include <cstdint>
#include <string>
#include <string_view>

namespace demsde {

/// Random-walk void generator parameters: seed-square count, walk length,
/// square side in cells.
struct MaskSpec
{
	int n_center = 0;
	int t_walk = 0;
	int r_v = 1;

	bool operator==(const MaskSpec&) const = default;
};

/// Decodes "M-<n><t><r>" (one digit each, e.g. "M-423") or "none".
MaskSpec parse_mask_preset(std::string_view name);
std::string mask_preset_name(const MaskSpec& spec);

/// true = void
struct VoidMask
{
	MaskArray mask;

	Eigen::Index void_count() const { return mask.count(); }
	double void_fraction() const
	{
		return mask.size() == 0 ? 0.0 : static_cast<double>(mask.count()) / static_cast<double>(mask.size());
	}
};

struct PatchPair
{
	NormalizedPatch d_hq;
	NormalizedPatch d_lq;
	/// d_lq lifted to the d_hq grid by bicubic; the terminal mean of the SDE.
	NormalizedPatch mu;
	VoidMask mask_hq;
	int scale = 1;
};

/// Block mean over valid members; an all-void block stays void.
HeightGrid downsample(const HeightGrid& hq, int scale);

/// Catmull-Rom (a = -0.5) with reflect padding, pixel-center aligned.
/// Void cells contribute whatever value they hold.
Eigen::ArrayXXd upsample_bicubic(const Eigen::ArrayXXd& lq, int scale);
HeightGrid upsample_bicubic(const HeightGrid& lq, int scale);

/// Catmull-Rom weight at offset x.
double catmull_rom(double x);

VoidMask gen_void_mask(const MaskSpec& spec, Eigen::Index rows, Eigen::Index cols, std::uint64_t seed);

NormalizedPatch apply_voids(const NormalizedPatch& patch, const VoidMask& mask);

/// Nearest-neighbour expansion of a mask by an integer factor.
VoidMask expand_mask(const VoidMask& mask, int scale);

PatchPair make_pair(const HeightGrid& hq, int scale, const MaskSpec& spec, std::uint64_t seed);

} // namespace demsde
