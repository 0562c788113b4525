#pragma once

#include "demsde/error.hpp"
#include "demsde/nn/tensor.hpp"

#include <string>
#include <unordered_map>
#include <vector>

namespace demsde::nn {

/// Named parameter tensors in declaration order. The same container type
/// holds gradients and optimizer moments.
template <typename Scalar>
class ParamStore
{
public:
	using TensorT = Tensor<Scalar>;

	void add(const std::string& name, TensorT value)
	{
		if (index_.count(name))
			throw Error(ErrorCode::BadParam, "duplicate parameter " + name);
		index_.emplace(name, values_.size());
		names_.push_back(name);
		values_.push_back(std::move(value));
	}

	bool contains(const std::string& name) const { return index_.count(name) != 0; }

	TensorT& get(const std::string& name) { return values_[lookup(name)]; }
	const TensorT& get(const std::string& name) const { return values_[lookup(name)]; }

	std::size_t size() const { return values_.size(); }
	const std::string& name(std::size_t k) const { return names_[k]; }
	TensorT& at(std::size_t k) { return values_[k]; }
	const TensorT& at(std::size_t k) const { return values_[k]; }

	Eigen::Index total_count() const
	{
		Eigen::Index n = 0;
		for (const auto& v : values_)
			n += v.data.size();
		return n;
	}

	bool all_finite() const
	{
		for (const auto& v : values_)
			if (!v.data.allFinite())
				return false;
		return true;
	}

	/// Same names and shapes, all zeros.
	ParamStore zeros_like() const
	{
		ParamStore out;
		for (std::size_t k = 0; k < size(); ++k)
			out.add(names_[k], TensorT(values_[k].c, values_[k].h, values_[k].w));
		return out;
	}

	void set_zero()
	{
		for (auto& v : values_)
			v.data.setZero();
	}

	template <typename Other>
	ParamStore<Other> cast() const
	{
		ParamStore<Other> out;
		for (std::size_t k = 0; k < size(); ++k)
			out.add(names_[k], values_[k].template cast<Other>());
		return out;
	}

	bool operator==(const ParamStore& o) const
	{
		if (names_ != o.names_)
			return false;
		for (std::size_t k = 0; k < size(); ++k)
			if (!values_[k].same_shape(o.values_[k]) || values_[k].data != o.values_[k].data)
				return false;
		return true;
	}

private:
	std::size_t lookup(const std::string& name) const
	{
		auto it = index_.find(name);
		if (it == index_.end())
			throw Error(ErrorCode::ShapeMismatch, "unknown parameter " + name);
		return it->second;
	}

	std::vector<std::string> names_;
	std::vector<TensorT> values_;
	std::unordered_map<std::string, std::size_t> index_;
};

} // namespace demsde::nn
