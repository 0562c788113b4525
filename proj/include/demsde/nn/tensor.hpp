#pragma once

#include <Eigen/Dense>

namespace demsde::nn {

template <typename Scalar>
using MatrixR = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Feature map stored channel-major: one row per channel, pixels row-major
/// along the columns (pixel index = y * w + x). Vectors are (c, 1, 1).
template <typename Scalar>
struct Tensor
{
	using Matrix = MatrixR<Scalar>;

	int c = 0;
	int h = 0;
	int w = 0;
	Matrix data;

	Tensor() = default;
	Tensor(int channels, int height, int width)
		: c(channels), h(height), w(width), data(Matrix::Zero(channels, Eigen::Index(height) * width))
	{
	}
	Tensor(int channels, int height, int width, Matrix m)
		: c(channels), h(height), w(width), data(std::move(m))
	{
	}

	Eigen::Index pixels() const { return Eigen::Index(h) * w; }
	bool empty() const { return data.size() == 0; }
	bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }

	Scalar& operator()(int ch, int y, int x) { return data(ch, Eigen::Index(y) * w + x); }
	Scalar operator()(int ch, int y, int x) const { return data(ch, Eigen::Index(y) * w + x); }

	template <typename Other>
	Tensor<Other> cast() const
	{
		return Tensor<Other>(c, h, w, data.template cast<Other>());
	}
};

/// Single-channel tensor from an elevation-style array indexed (row, col).
template <typename Scalar, typename Derived>
Tensor<Scalar> from_field(const Eigen::ArrayBase<Derived>& field)
{
	const auto rows = static_cast<int>(field.rows());
	const auto cols = static_cast<int>(field.cols());
	Tensor<Scalar> t(1, rows, cols);
	for (int y = 0; y < rows; ++y)
		for (int x = 0; x < cols; ++x)
			t(0, y, x) = static_cast<Scalar>(field(y, x));
	return t;
}

template <typename Out, typename Scalar>
Eigen::Array<Out, Eigen::Dynamic, Eigen::Dynamic> to_field(const Tensor<Scalar>& t, int channel = 0)
{
	Eigen::Array<Out, Eigen::Dynamic, Eigen::Dynamic> out(t.h, t.w);
	for (int y = 0; y < t.h; ++y)
		for (int x = 0; x < t.w; ++x)
			out(y, x) = static_cast<Out>(t(channel, y, x));
	return out;
}

} // namespace demsde::nn
