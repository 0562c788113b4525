#include "demsde/degrade.hpp"
#include "demsde/error.hpp"
#include "support.hpp"

#include "doctest.h"

#include <cmath>
#include <queue>

using namespace demsde;

namespace {

template <typename F>
ErrorCode code_of(F&& f)
{
	try {
		f();
	} catch (const Error& e) {
		return e.code();
	}
	FAIL("expected an Error");
	return ErrorCode::BadParam;
}

// Independent bicubic: direct 4x4 convolution per output pixel.
double keys(double x)
{
	x = std::abs(x);
	if (x < 1.0)
		return 1.5 * x * x * x - 2.5 * x * x + 1.0;
	if (x < 2.0)
		return -0.5 * x * x * x + 2.5 * x * x - 4.0 * x + 2.0;
	return 0.0;
}

Eigen::Index mirror(Eigen::Index i, Eigen::Index n)
{
	while (i < 0 || i >= n)
		i = i < 0 ? -i : 2 * (n - 1) - i;
	return i;
}

Eigen::ArrayXXd bicubic_oracle(const Eigen::ArrayXXd& in, int scale)
{
	Eigen::ArrayXXd out(in.rows() * scale, in.cols() * scale);
	for (Eigen::Index r = 0; r < out.rows(); ++r)
		for (Eigen::Index c = 0; c < out.cols(); ++c) {
			const double sr = (r + 0.5) / scale - 0.5, sc = (c + 0.5) / scale - 0.5;
			const auto fr = static_cast<Eigen::Index>(std::floor(sr));
			const auto fc = static_cast<Eigen::Index>(std::floor(sc));
			double acc = 0.0;
			for (Eigen::Index i = fr - 1; i <= fr + 2; ++i)
				for (Eigen::Index j = fc - 1; j <= fc + 2; ++j)
					acc += keys(sr - i) * keys(sc - j) * in(mirror(i, in.rows()), mirror(j, in.cols()));
			out(r, c) = acc;
		}
	return out;
}

bool single_component(const MaskArray& m)
{
	const Eigen::Index total = m.count();
	if (total == 0)
		return true;
	MaskArray seen = MaskArray::Constant(m.rows(), m.cols(), false);
	std::queue<std::pair<Eigen::Index, Eigen::Index>> q;
	for (Eigen::Index k = 0; k < m.size() && q.empty(); ++k)
		if (m.data()[k]) {
			q.emplace(k % m.rows(), k / m.rows());
			seen(k % m.rows(), k / m.rows()) = true;
		}
	Eigen::Index reached = 0;
	while (!q.empty()) {
		auto [r, c] = q.front();
		q.pop();
		++reached;
		const Eigen::Index dr[] = {1, -1, 0, 0}, dc[] = {0, 0, 1, -1};
		for (int d = 0; d < 4; ++d) {
			const Eigen::Index nr = r + dr[d], nc = c + dc[d];
			if (nr >= 0 && nc >= 0 && nr < m.rows() && nc < m.cols() && m(nr, nc) && !seen(nr, nc)) {
				seen(nr, nc) = true;
				q.emplace(nr, nc);
			}
		}
	}
	return reached == total;
}

} // namespace

TEST_CASE("downsample takes block means")
{
	HeightGrid block(Eigen::ArrayXXd{{1, 2}, {3, 4}}, 2.0);
	HeightGrid lq = downsample(block, 2);
	REQUIRE(lq.rows() == 1);
	CHECK(lq.values(0, 0) == 2.5);
	CHECK(lq.cell_size == 4.0);

	HeightGrid flat(Eigen::ArrayXXd::Constant(12, 12, 37.25), 1.0);
	for (int s : {1, 2, 3, 4, 6})
		CHECK((downsample(flat, s).values == 37.25).all());

	Eigen::ArrayXXd ramp(4, 4);
	for (int r = 0; r < 4; ++r)
		for (int c = 0; c < 4; ++c)
			ramp(r, c) = 4 * r + c;
	HeightGrid out = downsample(HeightGrid(ramp), 2);
	for (int br = 0; br < 2; ++br)
		for (int bc = 0; bc < 2; ++bc) {
			double sum = 0.0;
			for (int r = 0; r < 2; ++r)
				for (int c = 0; c < 2; ++c)
					sum += ramp(2 * br + r, 2 * bc + c);
			CHECK(out.values(br, bc) == sum / 4.0);
		}
}

TEST_CASE("downsample averages valid members and keeps all-void blocks void")
{
	HeightGrid g(Eigen::ArrayXXd{{1, 9, 5, 5}, {3, 9, 5, 5}}, 1.0);
	g.valid(0, 1) = g.valid(1, 1) = false;
	g.valid.block(0, 2, 2, 2).setConstant(false);
	HeightGrid lq = downsample(g, 2);
	CHECK(lq.values(0, 0) == 2.0);
	CHECK(lq.valid(0, 0));
	CHECK_FALSE(lq.valid(0, 1));
	CHECK(code_of([] { downsample(HeightGrid(Eigen::ArrayXXd::Zero(5, 4)), 2); }) == ErrorCode::NotDivisible);
}

TEST_CASE("catmull-rom kernel values")
{
	CHECK(catmull_rom(0.0) == 1.0);
	CHECK(catmull_rom(1.0) == 0.0);
	CHECK(catmull_rom(2.0) == 0.0);
	CHECK(catmull_rom(0.5) == doctest::Approx(0.5625).epsilon(1e-15));
	CHECK(catmull_rom(-1.5) == doctest::Approx(-0.0625).epsilon(1e-15));
	CHECK(catmull_rom(2.5) == 0.0);
}

TEST_CASE("bicubic reproduces constants and interior ramps")
{
	Eigen::ArrayXXd c = Eigen::ArrayXXd::Constant(6, 7, 3.5);
	CHECK(((upsample_bicubic(c, 3) - 3.5).abs() < 1e-12).all());

	Eigen::ArrayXXd ramp(8, 8);
	for (int r = 0; r < 8; ++r)
		for (int col = 0; col < 8; ++col)
			ramp(r, col) = 2.0 * r - 0.75 * col + 10.0;
	for (int s : {2, 3, 4}) {
		Eigen::ArrayXXd up = upsample_bicubic(ramp, s);
		// pixels whose four taps all fall inside the source grid
		for (Eigen::Index r = 0; r < up.rows(); ++r)
			for (Eigen::Index col = 0; col < up.cols(); ++col) {
				const double sr = (r + 0.5) / s - 0.5, sc = (col + 0.5) / s - 0.5;
				if (std::floor(sr) < 1 || std::floor(sr) + 2 > 7 || std::floor(sc) < 1 || std::floor(sc) + 2 > 7)
					continue;
				CHECK(std::abs(up(r, col) - (2.0 * sr - 0.75 * sc + 10.0)) < 1e-6);
			}
	}
}

TEST_CASE("bicubic matches a direct-convolution oracle")
{
	for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
		Eigen::ArrayXXd in = testsupport::random_field(8, 8, seed, -5.0, 5.0);
		CHECK(((upsample_bicubic(in, 2) - bicubic_oracle(in, 2)).abs() < 1e-6).all());
	}
	Eigen::ArrayXXd rect = testsupport::random_field(5, 9, 4);
	CHECK(((upsample_bicubic(rect, 3) - bicubic_oracle(rect, 3)).abs() < 1e-6).all());
	CHECK(code_of([] { upsample_bicubic(Eigen::ArrayXXd::Zero(3, 8), 2); }) == ErrorCode::TooSmall);

	HeightGrid g(testsupport::random_field(6, 6, 9), 4.0);
	HeightGrid up = upsample_bicubic(g, 2);
	CHECK(up.cell_size == 2.0);
	CHECK(up.valid_count() == 144);
}

TEST_CASE("mask presets decode")
{
	CHECK(parse_mask_preset("M-311") == MaskSpec{3, 1, 1});
	CHECK(parse_mask_preset("M-423") == MaskSpec{4, 2, 3});
	CHECK(parse_mask_preset("M-442") == MaskSpec{4, 4, 2});
	CHECK(parse_mask_preset("M-533") == MaskSpec{5, 3, 3});
	CHECK(parse_mask_preset("none") == MaskSpec{0, 0, 1});
	CHECK(mask_preset_name(MaskSpec{4, 2, 3}) == "M-423");
	CHECK(code_of([] { parse_mask_preset("M-31"); }) == ErrorCode::BadParam);
	CHECK(code_of([] { parse_mask_preset("X-311"); }) == ErrorCode::BadParam);
}

TEST_CASE("void mask counts and determinism")
{
	CHECK(gen_void_mask({0, 3, 2}, 20, 20, 1).void_count() == 0);

	for (std::uint64_t seed = 0; seed < 200; ++seed) {
		const auto n = gen_void_mask(parse_mask_preset("M-311"), 96, 96, seed).void_count();
		CHECK(n >= 3);
		CHECK(n <= 6);
	}
	const VoidMask m533 = gen_void_mask(parse_mask_preset("M-533"), 96, 96, 42);
	CHECK(m533.void_count() <= 180);
	CHECK(m533.void_count() >= 45);
	CHECK(m533.void_fraction() == doctest::Approx(m533.void_count() / 9216.0));

	const VoidMask a = gen_void_mask(parse_mask_preset("M-423"), 96, 96, 1);
	const VoidMask b = gen_void_mask(parse_mask_preset("M-423"), 96, 96, 1);
	CHECK((a.mask == b.mask).all());
	CHECK(code_of([] { gen_void_mask({1, 1, 9}, 8, 8, 0); }) == ErrorCode::BadParam);
}

TEST_CASE("a single walk leaves one 4-connected void region")
{
	for (std::uint64_t seed = 0; seed < 100; ++seed) {
		CHECK(single_component(gen_void_mask({1, 6, 1}, 24, 24, seed).mask));
		CHECK(single_component(gen_void_mask({1, 4, 3}, 24, 24, seed).mask));
	}
}

TEST_CASE("apply_voids counting")
{
	NormalizedPatch p;
	p.values = testsupport::random_field(6, 5, 2);
	p.valid = MaskArray::Constant(6, 5, true);
	VoidMask none{MaskArray::Constant(6, 5, false)};
	NormalizedPatch same = apply_voids(p, none);
	CHECK((same.values == p.values).all());
	CHECK(same.valid.count() == 30);

	VoidMask all{MaskArray::Constant(6, 5, true)};
	NormalizedPatch gone = apply_voids(p, all);
	CHECK(gone.valid.count() == 0);
	CHECK((gone.values == 0.0).all());

	VoidMask some{MaskArray::Constant(6, 5, false)};
	some.mask(0, 0) = some.mask(3, 4) = some.mask(5, 1) = true;
	CHECK(apply_voids(p, some).valid.count() == 27);
	CHECK(code_of([&] { apply_voids(p, VoidMask{MaskArray::Constant(5, 5, false)}); }) == ErrorCode::DimMismatch);
}

TEST_CASE("make_pair shapes, identity and determinism")
{
	HeightGrid hq = synth_terrain(96, 96, 0.6, 3);
	PatchPair id = make_pair(hq, 1, MaskSpec{0, 0, 1}, 5);
	CHECK((id.mu.values == id.d_hq.values).all());
	CHECK((id.d_lq.values == id.d_hq.values).all());

	PatchPair p = make_pair(hq, 2, parse_mask_preset("M-423"), 9);
	CHECK(p.d_lq.rows() == 48);
	CHECK(p.mu.rows() == 96);
	CHECK(p.mask_hq.mask.rows() == 96);
	CHECK(p.mask_hq.void_count() == 4 * (p.d_lq.valid.size() - p.d_lq.valid.count()));
	CHECK(p.d_hq.record.lo == p.d_lq.record.lo);
	CHECK(p.d_hq.record.hi == p.d_lq.record.hi);
	CHECK((p.mu.values == upsample_bicubic(p.d_lq.values, 2)).all());

	PatchPair q = make_pair(hq, 2, parse_mask_preset("M-423"), 9);
	CHECK((q.d_lq.values == p.d_lq.values).all());
	CHECK((q.mu.values == p.mu.values).all());
	CHECK((q.mask_hq.mask == p.mask_hq.mask).all());
}
