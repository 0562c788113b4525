#pragma once

#include "demsde/nn/params.hpp"

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <unordered_map>
#include <vector>

namespace demsde::nn {

struct Var
{
	int id = -1;
	bool valid() const { return id >= 0; }
};

/// Reverse-mode tape for one forward evaluation. Nodes are appended in
/// topological order; backward() walks them in reverse. Parameters enter as
/// leaves copied from a ParamStore and their gradients are read back with
/// accumulate_param_grads().
template <typename Scalar>
class Graph
{
public:
	using TensorT = Tensor<Scalar>;
	using Backward = std::function<void(Graph&, const TensorT&)>;

	explicit Graph(bool record = true)
		: record_(record)
	{
	}

	bool recording() const { return record_; }

	Var constant(TensorT value) { return append(std::move(value), false, {}); }

	Var param(const ParamStore<Scalar>& store, const std::string& name)
	{
		if (auto it = param_ids_.find(name); it != param_ids_.end())
			return it->second;
		Var v = append(store.get(name), record_, {});
		param_ids_.emplace(name, v);
		param_order_.emplace_back(name, v);
		return v;
	}

	/// Appends an op result. The backward closure is kept only if some input
	/// requires a gradient.
	Var push(TensorT value, std::initializer_list<Var> inputs, Backward back)
	{
		return push_range(std::move(value), inputs, std::move(back));
	}

	Var push(TensorT value, const std::vector<Var>& inputs, Backward back)
	{
		return push_range(std::move(value), inputs, std::move(back));
	}

	const TensorT& value(Var v) const { return nodes_[v.id].value; }
	bool needs_grad(Var v) const { return v.valid() && nodes_[v.id].needs_grad; }

	/// Gradient buffer of v, zero-allocated on first use.
	TensorT& grad(Var v)
	{
		Node& n = nodes_[v.id];
		if (n.grad.empty())
			n.grad = TensorT(n.value.c, n.value.h, n.value.w);
		return n.grad;
	}

	bool has_grad(Var v) const { return !nodes_[v.id].grad.empty(); }

	void backward(Var out, const TensorT& seed)
	{
		if (!seed.same_shape(value(out)))
			throw Error(ErrorCode::ShapeMismatch, "backward seed shape differs from output");
		if (!needs_grad(out))
			return;
		grad(out).data += seed.data;
		for (int id = out.id; id >= 0; --id) {
			Node& n = nodes_[static_cast<std::size_t>(id)];
			if (n.back && !n.grad.empty())
				n.back(*this, n.grad);
		}
	}

	/// Adds parameter gradients into `grads` (same names as the store).
	void accumulate_param_grads(ParamStore<Scalar>& grads) const
	{
		for (const auto& [name, v] : param_order_) {
			const Node& n = nodes_[v.id];
			if (!n.grad.empty())
				grads.get(name).data += n.grad.data;
		}
	}

	std::size_t size() const { return nodes_.size(); }

	/// Running hash of discrete decisions taken by piecewise-smooth ops
	/// (bilinear cell choice, border clamps). Two evaluations with equal hash
	/// lie on the same smooth piece.
	std::uint64_t kink_hash() const { return kink_hash_; }
	void track_kinks(bool on) { track_kinks_ = on; }
	bool tracking_kinks() const { return track_kinks_; }
	void mix_kink(std::uint64_t value)
	{
		kink_hash_ ^= value + 0x9e3779b97f4a7c15ULL + (kink_hash_ << 6) + (kink_hash_ >> 2);
	}

private:
	struct Node
	{
		TensorT value;
		TensorT grad;
		bool needs_grad = false;
		Backward back;
	};

	template <typename Range>
	Var push_range(TensorT value, const Range& inputs, Backward back)
	{
		bool needs = false;
		if (record_)
			for (Var in : inputs)
				needs = needs || (in.valid() && nodes_[in.id].needs_grad);
		return append(std::move(value), needs, needs ? std::move(back) : Backward{});
	}

	Var append(TensorT value, bool needs, Backward back)
	{
		nodes_.push_back(Node{std::move(value), TensorT{}, needs, std::move(back)});
		return Var{static_cast<int>(nodes_.size()) - 1};
	}

	bool record_;
	bool track_kinks_ = false;
	std::uint64_t kink_hash_ = 0;
	std::vector<Node> nodes_;
	std::unordered_map<std::string, Var> param_ids_;
	std::vector<std::pair<std::string, Var>> param_order_;
};

} // namespace demsde::nn
