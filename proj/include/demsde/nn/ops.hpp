#pragma once

// Differentiable feature-map operations recorded on a Graph. Every op
// validates shapes, computes its value eagerly and registers a closure that
// accumulates input gradients.

#include "demsde/nn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace demsde::nn {

enum class Padding
{
	Zero,
	Replicate,
};

namespace detail {

inline void require(bool ok, const char* what)
{
	if (!ok)
		throw Error(ErrorCode::ShapeMismatch, what);
}

template <typename Scalar>
MatrixR<Scalar> im2col(const Tensor<Scalar>& x, int k, int stride, int pad, Padding mode, int ho, int wo)
{
	MatrixR<Scalar> cols(Eigen::Index(x.c) * k * k, Eigen::Index(ho) * wo);
	for (int ci = 0; ci < x.c; ++ci)
		for (int ky = 0; ky < k; ++ky)
			for (int kx = 0; kx < k; ++kx) {
				Scalar* dst = cols.data() + (Eigen::Index(ci) * k * k + ky * k + kx) * cols.cols();
				const Scalar* src = x.data.data() + Eigen::Index(ci) * x.pixels();
				for (int oy = 0; oy < ho; ++oy) {
					int iy = oy * stride - pad + ky;
					const bool y_in = iy >= 0 && iy < x.h;
					if (mode == Padding::Replicate)
						iy = std::clamp(iy, 0, x.h - 1);
					for (int ox = 0; ox < wo; ++ox) {
						int ix = ox * stride - pad + kx;
						const bool x_in = ix >= 0 && ix < x.w;
						Scalar v(0);
						if (mode == Padding::Replicate)
							v = src[Eigen::Index(iy) * x.w + std::clamp(ix, 0, x.w - 1)];
						else if (y_in && x_in)
							v = src[Eigen::Index(iy) * x.w + ix];
						dst[Eigen::Index(oy) * wo + ox] = v;
					}
				}
			}
	return cols;
}

template <typename Scalar>
void col2im_add(const MatrixR<Scalar>& cols, Tensor<Scalar>& dx, int k, int stride, int pad, Padding mode, int ho,
	int wo)
{
	for (int ci = 0; ci < dx.c; ++ci)
		for (int ky = 0; ky < k; ++ky)
			for (int kx = 0; kx < k; ++kx) {
				const Scalar* src = cols.data() + (Eigen::Index(ci) * k * k + ky * k + kx) * cols.cols();
				Scalar* dst = dx.data.data() + Eigen::Index(ci) * dx.pixels();
				for (int oy = 0; oy < ho; ++oy) {
					int iy = oy * stride - pad + ky;
					if (mode == Padding::Replicate)
						iy = std::clamp(iy, 0, dx.h - 1);
					else if (iy < 0 || iy >= dx.h)
						continue;
					for (int ox = 0; ox < wo; ++ox) {
						int ix = ox * stride - pad + kx;
						if (mode == Padding::Replicate)
							ix = std::clamp(ix, 0, dx.w - 1);
						else if (ix < 0 || ix >= dx.w)
							continue;
						dst[Eigen::Index(iy) * dx.w + ix] += src[Eigen::Index(oy) * wo + ox];
					}
				}
			}
}

// Shared tail of regular and deformable convolution: Y = W * cols + b and the
// matching weight/bias/column gradients.
template <typename Scalar>
Tensor<Scalar> conv_from_columns(const Tensor<Scalar>& w, const Tensor<Scalar>* b, const MatrixR<Scalar>& cols, int ho,
	int wo)
{
	Tensor<Scalar> y(w.c, ho, wo, MatrixR<Scalar>(w.c, Eigen::Index(ho) * wo));
	y.data.noalias() = w.data * cols;
	if (b)
		y.data.colwise() += b->data.col(0);
	return y;
}

template <typename Scalar>
void conv_columns_backward(
	Graph<Scalar>& g, Var w, Var b, const MatrixR<Scalar>& cols, const Tensor<Scalar>& dy, MatrixR<Scalar>* dcols)
{
	if (g.needs_grad(w))
		g.grad(w).data.noalias() += dy.data * cols.transpose();
	if (b.valid() && g.needs_grad(b))
		g.grad(b).data.col(0) += dy.data.rowwise().sum();
	if (dcols)
		dcols->noalias() = g.value(w).data.transpose() * dy.data;
}

} // namespace detail

/// Dense 2-D convolution. w is (cout, 1, cin*k*k) with taps ordered
/// (ci, ky, kx); b is (cout, 1, 1) or an invalid Var.
template <typename Scalar>
Var conv2d(Graph<Scalar>& g, Var x, Var w, Var b, int k, int stride = 1, int pad = 0, Padding mode = Padding::Zero)
{
	const auto& X = g.value(x);
	const auto& W = g.value(w);
	detail::require(W.w == X.c * k * k && W.h == 1, "conv2d: kernel does not match input channels");
	detail::require(!b.valid() || (g.value(b).c == W.c && g.value(b).pixels() == 1), "conv2d: bias shape");
	const int ho = (X.h + 2 * pad - k) / stride + 1;
	const int wo = (X.w + 2 * pad - k) / stride + 1;
	detail::require(ho > 0 && wo > 0, "conv2d: input smaller than kernel");

	const bool direct = k == 1 && stride == 1 && pad == 0;
	MatrixR<Scalar> cols;
	if (!direct)
		cols = detail::im2col(X, k, stride, pad, mode, ho, wo);
	auto y = detail::conv_from_columns(W, b.valid() ? &g.value(b) : nullptr, direct ? X.data : cols, ho, wo);

	return g.push(std::move(y), {x, w, b},
		[=, cols = std::move(cols)](Graph<Scalar>& g, const Tensor<Scalar>& dy) {
			const bool want_x = g.needs_grad(x);
			MatrixR<Scalar> dcols;
			detail::conv_columns_backward(g, w, b, direct ? g.value(x).data : cols, dy, want_x ? &dcols : nullptr);
			if (!want_x)
				return;
			if (direct)
				g.grad(x).data += dcols;
			else
				detail::col2im_add(dcols, g.grad(x), k, stride, pad, mode, ho, wo);
		});
}

namespace detail {

template <typename Scalar>
using VecMap = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>;

// Copies one channel into a zero border of width `pad`, row pitch w + 2 pad.
template <typename Scalar>
void pad_channel(const Scalar* in, int h, int w, int pad, std::vector<Scalar>& out)
{
	const int pitch = w + 2 * pad;
	out.assign(std::size_t(h + 2 * pad) * pitch, Scalar(0));
	for (int y = 0; y < h; ++y)
		std::copy(in + Eigen::Index(y) * w, in + Eigen::Index(y + 1) * w, out.data() + Eigen::Index(y + pad) * pitch + pad);
}

} // namespace detail

/// Per-channel k x k convolution with zero "same" padding. w is (c, 1, k*k).
template <typename Scalar>
Var depthwise_conv2d(Graph<Scalar>& g, Var x, Var w, Var b, int k)
{
	const auto& X = g.value(x);
	const auto& W = g.value(w);
	detail::require(W.c == X.c && W.w == k * k, "depthwise_conv2d: kernel shape");
	const int pad = (k - 1) / 2;
	const int H = X.h, Wd = X.w, pitch = Wd + 2 * pad;
	// Output rows are accumulated with the padded pitch so that every tap is a
	// single contiguous axpy; the trailing 2*pad columns of each row are junk.
	const Eigen::Index span = Eigen::Index(H - 1) * pitch + Wd;
	Tensor<Scalar> y(X.c, H, Wd);
	std::vector<Scalar> padded, acc(std::size_t(H) * pitch);
	for (int ch = 0; ch < X.c; ++ch) {
		detail::pad_channel(X.data.data() + Eigen::Index(ch) * X.pixels(), H, Wd, pad, padded);
		detail::VecMap<Scalar> sum(acc.data(), span);
		sum.setConstant(b.valid() ? g.value(b).data(ch, 0) : Scalar(0));
		for (int t = 0; t < k * k; ++t)
			sum += W.data(ch, t) * detail::VecMap<Scalar>(padded.data() + (t / k) * pitch + t % k, span);
		Scalar* out = y.data.data() + Eigen::Index(ch) * y.pixels();
		for (int oy = 0; oy < H; ++oy)
			std::copy(acc.data() + Eigen::Index(oy) * pitch, acc.data() + Eigen::Index(oy) * pitch + Wd, out + Eigen::Index(oy) * Wd);
	}
	return g.push(std::move(y), {x, w, b}, [=](Graph<Scalar>& g, const Tensor<Scalar>& dyt) {
		const auto& X = g.value(x);
		const auto& W = g.value(w);
		if (b.valid() && g.needs_grad(b))
			g.grad(b).data.col(0) += dyt.data.rowwise().sum();
		Tensor<Scalar>* dX = g.needs_grad(x) ? &g.grad(x) : nullptr;
		Tensor<Scalar>* dW = g.needs_grad(w) ? &g.grad(w) : nullptr;
		std::vector<Scalar> padded, gpad, gout(std::size_t(H) * pitch);
		for (int ch = 0; ch < X.c; ++ch) {
			// upstream gradient in the padded pitch, zero in the junk columns
			std::fill(gout.begin(), gout.end(), Scalar(0));
			const Scalar* dy = dyt.data.data() + Eigen::Index(ch) * dyt.pixels();
			for (int oy = 0; oy < H; ++oy)
				std::copy(dy + Eigen::Index(oy) * Wd, dy + Eigen::Index(oy + 1) * Wd, gout.data() + Eigen::Index(oy) * pitch);
			const detail::VecMap<Scalar> go(gout.data(), span);
			if (dW) {
				detail::pad_channel(X.data.data() + Eigen::Index(ch) * X.pixels(), H, Wd, pad, padded);
				for (int t = 0; t < k * k; ++t)
					dW->data(ch, t) += (go * detail::VecMap<Scalar>(padded.data() + (t / k) * pitch + t % k, span)).sum();
			}
			if (dX) {
				gpad.assign(std::size_t(H + 2 * pad) * pitch, Scalar(0));
				for (int t = 0; t < k * k; ++t)
					detail::VecMap<Scalar>(gpad.data() + (t / k) * pitch + t % k, span) += W.data(ch, t) * go;
				Scalar* gi = dX->data.data() + Eigen::Index(ch) * X.pixels();
				for (int iy = 0; iy < H; ++iy)
					detail::VecMap<Scalar>(gi + Eigen::Index(iy) * Wd, Wd) +=
						detail::VecMap<Scalar>(gpad.data() + Eigen::Index(iy + pad) * pitch + pad, Wd);
			}
		}
	});
}

namespace detail {

template <typename Scalar>
struct BilinearTap
{
	Eigen::Index i00, i01, i10, i11;
	Scalar ly, lx;
	bool y_clamped, x_clamped;
};

} // namespace detail

/// Deformable convolution, stride 1, "same" output size. `offset` is
/// (2*k*k, h, w): channel 2t holds the row offset and 2t+1 the column offset
/// of tap t = ky*k + kx. Sampling positions are clamped to the image, so
/// zero offsets reproduce conv2d with replicate padding exactly.
template <typename Scalar>
Var deform_conv2d(Graph<Scalar>& g, Var x, Var offset, Var w, Var b, int k)
{
	const auto& X = g.value(x);
	const auto& O = g.value(offset);
	const auto& W = g.value(w);
	const int K = k * k;
	detail::require(W.w == X.c * K && W.h == 1, "deform_conv2d: kernel does not match input channels");
	detail::require(O.c == 2 * K && O.h == X.h && O.w == X.w, "deform_conv2d: offset shape");
	detail::require(X.h >= k && X.w >= k, "deform_conv2d: input smaller than kernel");
	const int pad = (k - 1) / 2;
	const int H = X.h, Wd = X.w;
	const Eigen::Index P = X.pixels();

	std::vector<detail::BilinearTap<Scalar>> taps(static_cast<std::size_t>(K * P));
	for (int t = 0; t < K; ++t) {
		const int ky = t / k, kx = t % k;
		for (int y = 0; y < H; ++y)
			for (int xx = 0; xx < Wd; ++xx) {
				const Eigen::Index p = Eigen::Index(y) * Wd + xx;
				Scalar py = Scalar(y - pad + ky) + O.data(2 * t, p);
				Scalar px = Scalar(xx - pad + kx) + O.data(2 * t + 1, p);
				detail::BilinearTap<Scalar> s{};
				s.y_clamped = !(py >= Scalar(0) && py <= Scalar(H - 1));
				s.x_clamped = !(px >= Scalar(0) && px <= Scalar(Wd - 1));
				py = std::clamp(py, Scalar(0), Scalar(H - 1));
				px = std::clamp(px, Scalar(0), Scalar(Wd - 1));
				const int y0 = static_cast<int>(std::floor(py));
				const int x0 = static_cast<int>(std::floor(px));
				const int y1 = std::min(y0 + 1, H - 1);
				const int x1 = std::min(x0 + 1, Wd - 1);
				s.ly = py - Scalar(y0);
				s.lx = px - Scalar(x0);
				s.i00 = Eigen::Index(y0) * Wd + x0;
				s.i01 = Eigen::Index(y0) * Wd + x1;
				s.i10 = Eigen::Index(y1) * Wd + x0;
				s.i11 = Eigen::Index(y1) * Wd + x1;
				taps[static_cast<std::size_t>(t * P + p)] = s;
				if (g.tracking_kinks())
					g.mix_kink((std::uint64_t(y0) << 40) ^ (std::uint64_t(x0) << 16) ^
							   (std::uint64_t(s.y_clamped) << 1) ^ std::uint64_t(s.x_clamped));
			}
	}

	MatrixR<Scalar> cols(Eigen::Index(X.c) * K, P);
	for (int ci = 0; ci < X.c; ++ci) {
		const Scalar* in = X.data.data() + Eigen::Index(ci) * P;
		for (int t = 0; t < K; ++t) {
			Scalar* dst = cols.data() + (Eigen::Index(ci) * K + t) * P;
			const auto* s = taps.data() + Eigen::Index(t) * P;
			for (Eigen::Index p = 0; p < P; ++p) {
				const auto& q = s[p];
				dst[p] = (Scalar(1) - q.ly) * (Scalar(1) - q.lx) * in[q.i00] + (Scalar(1) - q.ly) * q.lx * in[q.i01] +
						 q.ly * (Scalar(1) - q.lx) * in[q.i10] + q.ly * q.lx * in[q.i11];
			}
		}
	}
	auto y = detail::conv_from_columns(W, b.valid() ? &g.value(b) : nullptr, cols, H, Wd);

	return g.push(std::move(y), {x, offset, w, b},
		[=, cols = std::move(cols), taps = std::move(taps)](Graph<Scalar>& g, const Tensor<Scalar>& dy) {
			const bool want_x = g.needs_grad(x), want_off = g.needs_grad(offset);
			MatrixR<Scalar> dcols;
			detail::conv_columns_backward(g, w, b, cols, dy, (want_x || want_off) ? &dcols : nullptr);
			if (!want_x && !want_off)
				return;
			const auto& X = g.value(x);
			Tensor<Scalar>* dX = want_x ? &g.grad(x) : nullptr;
			Tensor<Scalar>* dO = want_off ? &g.grad(offset) : nullptr;
			for (int ci = 0; ci < X.c; ++ci) {
				const Scalar* in = X.data.data() + Eigen::Index(ci) * P;
				Scalar* gin = dX ? dX->data.data() + Eigen::Index(ci) * P : nullptr;
				for (int t = 0; t < K; ++t) {
					const Scalar* dc = dcols.data() + (Eigen::Index(ci) * K + t) * P;
					const auto* s = taps.data() + Eigen::Index(t) * P;
					Scalar* goy = dO ? dO->data.data() + Eigen::Index(2 * t) * P : nullptr;
					Scalar* gox = dO ? dO->data.data() + Eigen::Index(2 * t + 1) * P : nullptr;
					for (Eigen::Index p = 0; p < P; ++p) {
						const auto& q = s[p];
						const Scalar d = dc[p];
						if (gin) {
							gin[q.i00] += (Scalar(1) - q.ly) * (Scalar(1) - q.lx) * d;
							gin[q.i01] += (Scalar(1) - q.ly) * q.lx * d;
							gin[q.i10] += q.ly * (Scalar(1) - q.lx) * d;
							gin[q.i11] += q.ly * q.lx * d;
						}
						if (dO) {
							const Scalar v00 = in[q.i00], v01 = in[q.i01], v10 = in[q.i10], v11 = in[q.i11];
							if (!q.y_clamped)
								goy[p] += d * ((Scalar(1) - q.lx) * (v10 - v00) + q.lx * (v11 - v01));
							if (!q.x_clamped)
								gox[p] += d * ((Scalar(1) - q.ly) * (v01 - v00) + q.ly * (v11 - v10));
						}
					}
				}
			}
		});
}

/// Normalizes across channels at each pixel, then applies per-channel gain
/// and bias (both (c, 1, 1)).
template <typename Scalar>
Var layer_norm(Graph<Scalar>& g, Var x, Var gain, Var bias, Scalar eps = Scalar(1e-6))
{
	const auto& X = g.value(x);
	detail::require(g.value(gain).c == X.c && g.value(bias).c == X.c, "layer_norm: parameter shape");
	using Arr = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
	using RowArr = Eigen::Array<Scalar, 1, Eigen::Dynamic>;
	const RowArr mean = X.data.array().colwise().mean();
	Arr xc = X.data.array().rowwise() - mean;
	const RowArr inv = (xc.square().colwise().mean() + eps).rsqrt();
	Arr xhat = xc.rowwise() * inv;
	Tensor<Scalar> y(X.c, X.h, X.w,
		((xhat.colwise() * g.value(gain).data.col(0).array()).colwise() + g.value(bias).data.col(0).array()).matrix());

	return g.push(std::move(y), {x, gain, bias},
		[=, xhat = std::move(xhat)](Graph<Scalar>& g, const Tensor<Scalar>& dy) {
			const auto dya = dy.data.array();
			if (g.needs_grad(gain))
				g.grad(gain).data.col(0).array() += (dya * xhat).rowwise().sum();
			if (g.needs_grad(bias))
				g.grad(bias).data.col(0).array() += dya.rowwise().sum();
			if (!g.needs_grad(x))
				return;
			const Arr dxhat = dya.colwise() * g.value(gain).data.col(0).array();
			const RowArr m1 = dxhat.colwise().mean();
			const RowArr m2 = (dxhat * xhat).colwise().mean();
			g.grad(x).data.array() += ((dxhat.rowwise() - m1) - xhat.rowwise() * m2).rowwise() * inv;
		});
}

template <typename Scalar>
Var gelu(Graph<Scalar>& g, Var x)
{
	const auto& X = g.value(x);
	const Scalar r2 = Scalar(1) / std::sqrt(Scalar(2));
	Tensor<Scalar> y(X.c, X.h, X.w, X.data.unaryExpr([r2](Scalar v) {
		return Scalar(0.5) * v * (Scalar(1) + std::erf(v * r2));
	}));
	return g.push(std::move(y), {x}, [=](Graph<Scalar>& g, const Tensor<Scalar>& dy) {
		const Scalar inv_sqrt_2pi = Scalar(1) / std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar>);
		const auto d = g.value(x).data.unaryExpr([=](Scalar v) {
			return Scalar(0.5) * (Scalar(1) + std::erf(v * r2)) + v * std::exp(Scalar(-0.5) * v * v) * inv_sqrt_2pi;
		});
		g.grad(x).data.array() += dy.data.array() * d.array();
	});
}

template <typename Scalar>
Var sigmoid(Graph<Scalar>& g, Var x)
{
	const auto& X = g.value(x);
	Tensor<Scalar> y(X.c, X.h, X.w, X.data.unaryExpr([](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); }));
	const int self = static_cast<int>(g.size());
	return g.push(std::move(y), {x}, [=](Graph<Scalar>& g, const Tensor<Scalar>& dy) {
		const auto s = g.value(Var{self}).data.array();
		g.grad(x).data.array() += dy.data.array() * s * (Scalar(1) - s);
	});
}

template <typename Scalar>
Var add(Graph<Scalar>& g, Var a, Var b)
{
	detail::require(g.value(a).same_shape(g.value(b)), "add: shape mismatch");
	Tensor<Scalar> y(g.value(a).c, g.value(a).h, g.value(a).w, g.value(a).data + g.value(b).data);
	return g.push(std::move(y), {a, b}, [=](Graph<Scalar>& g, const Tensor<Scalar>& dy) {
		if (g.needs_grad(a))
			g.grad(a).data += dy.data;
		if (g.needs_grad(b))
			g.grad(b).data += dy.data;
	});
}

template <typename Scalar>
Var mul(Graph<Scalar>& g, Var a, Var b)
{
	detail::require(g.value(a).same_shape(g.value(b)), "mul: shape mismatch");
	Tensor<Scalar> y(g.value(a).c, g.value(a).h, g.value(a).w, g.value(a).data.cwiseProduct(g.value(b).data));
	return g.push(std::move(y), {a, b}, [=](Graph<Scalar>& g, const Tensor<Scalar>& dy) {
		if (g.needs_grad(a))
			g.grad(a).data += dy.data.cwiseProduct(g.value(b).data);
		if (g.needs_grad(b))
			g.grad(b).data += dy.data.cwiseProduct(g.value(a).data);
	});
}

/// x * gate broadcast over pixels; gate is (c, 1, 1).
template <typename Scalar>
Var scale_channels(Graph<Scalar>& g, Var x, Var gate)
{
	const auto& X = g.value(x);
	detail::require(g.value(gate).c == X.c && g.value(gate).pixels() == 1, "scale_channels: gate shape");
	Tensor<Scalar> y(X.c, X.h, X.w, (X.data.array().colwise() * g.value(gate).data.col(0).array()).matrix());
	return g.push(std::move(y), {x, gate}, [=](Graph<Scalar>& g, const Tensor<Scalar>& dy) {
		if (g.needs_grad(x))
			g.grad(x).data.array() += dy.data.array().colwise() * g.value(gate).data.col(0).array();
		if (g.needs_grad(gate))
			g.grad(gate).data.col(0) += dy.data.cwiseProduct(g.value(x).data).rowwise().sum();
	});
}

/// x * (1 + scale) + shift with per-channel (c, 1, 1) scale and shift.
template <typename Scalar>
Var modulate(Graph<Scalar>& g, Var x, Var scale, Var shift)
{
	const auto& X = g.value(x);
	detail::require(g.value(scale).c == X.c && g.value(shift).c == X.c, "modulate: coefficient shape");
	const auto a = (g.value(scale).data.col(0).array() + Scalar(1)).eval();
	Tensor<Scalar> y(
		X.c, X.h, X.w, ((X.data.array().colwise() * a).colwise() + g.value(shift).data.col(0).array()).matrix());
	return g.push(std::move(y), {x, scale, shift}, [=](Graph<Scalar>& g, const Tensor<Scalar>& dy) {
		if (g.needs_grad(x))
			g.grad(x).data.array() +=
				dy.data.array().colwise() * (g.value(scale).data.col(0).array() + Scalar(1));
		if (g.needs_grad(scale))
			g.grad(scale).data.col(0) += dy.data.cwiseProduct(g.value(x).data).rowwise().sum();
		if (g.needs_grad(shift))
			g.grad(shift).data.col(0) += dy.data.rowwise().sum();
	});
}

template <typename Scalar>
Var concat_channels(Graph<Scalar>& g, const std::vector<Var>& parts)
{
	detail::require(!parts.empty(), "concat: no inputs");
	const auto& first = g.value(parts.front());
	int total = 0;
	for (Var p : parts) {
		detail::require(g.value(p).h == first.h && g.value(p).w == first.w, "concat: spatial mismatch");
		total += g.value(p).c;
	}
	Tensor<Scalar> y(total, first.h, first.w);
	int row = 0;
	for (Var p : parts) {
		y.data.middleRows(row, g.value(p).c) = g.value(p).data;
		row += g.value(p).c;
	}
	return g.push(std::move(y), parts, [=](Graph<Scalar>& g, const Tensor<Scalar>& dy) {
		int r = 0;
		for (Var p : parts) {
			const int c = g.value(p).c;
			if (g.needs_grad(p))
				g.grad(p).data += dy.data.middleRows(r, c);
			r += c;
		}
	});
}

template <typename Scalar>
Var slice_channels(Graph<Scalar>& g, Var x, int first, int count)
{
	const auto& X = g.value(x);
	detail::require(first >= 0 && count > 0 && first + count <= X.c, "slice: channel range");
	Tensor<Scalar> y(count, X.h, X.w, X.data.middleRows(first, count));
	return g.push(std::move(y), {x}, [=](Graph<Scalar>& g, const Tensor<Scalar>& dy) {
		g.grad(x).data.middleRows(first, count) += dy.data;
	});
}

template <typename Scalar>
Var global_avg_pool(Graph<Scalar>& g, Var x)
{
	const auto& X = g.value(x);
	Tensor<Scalar> y(X.c, 1, 1, X.data.rowwise().mean());
	const auto inv = Scalar(1) / Scalar(X.pixels());
	return g.push(std::move(y), {x}, [=](Graph<Scalar>& g, const Tensor<Scalar>& dy) {
		g.grad(x).data.colwise() += dy.data.col(0) * inv;
	});
}

template <typename Scalar>
Var upsample_nearest2(Graph<Scalar>& g, Var x)
{
	const auto& X = g.value(x);
	Tensor<Scalar> y(X.c, X.h * 2, X.w * 2);
	for (int ch = 0; ch < X.c; ++ch)
		for (int yy = 0; yy < y.h; ++yy)
			for (int xx = 0; xx < y.w; ++xx)
				y(ch, yy, xx) = X(ch, yy / 2, xx / 2);
	return g.push(std::move(y), {x}, [=](Graph<Scalar>& g, const Tensor<Scalar>& dy) {
		auto& dX = g.grad(x);
		for (int ch = 0; ch < dy.c; ++ch)
			for (int yy = 0; yy < dy.h; ++yy)
				for (int xx = 0; xx < dy.w; ++xx)
					dX(ch, yy / 2, xx / 2) += dy(ch, yy, xx);
	});
}

} // namespace demsde::nn
