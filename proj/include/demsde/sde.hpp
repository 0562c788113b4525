#pragma once

// Mean-reverting SDE  dx = theta_t (mu - x) dt + sigma_t dw  with
// sigma_t^2 / theta_t = 2 lambda^2, discretised on an index grid i = 0..T.
//
// All stepping functions are templated on the Eigen array expression so the
// same code serves scalar (1x1) tests and full patches.

#include "demsde/error.hpp"

#include "json.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

namespace demsde {

enum class ThetaProfile
{
	Constant,
	Cosine,
};

ThetaProfile parse_profile(const std::string& name);
std::string profile_name(ThetaProfile profile);

/// Immutable coefficient table. Index 0 is the clean state (theta_bar = 0,
/// v = 0); indices 1..T are the diffusion steps.
class DiffusionSchedule
{
public:
	DiffusionSchedule() = default;

	int steps() const { return T_; }
	double lambda() const { return lambda_; }
	double terminal_decay() const { return terminal_decay_; }
	ThetaProfile profile() const { return profile_; }

	/// per-step mean-reversion increment, i in [1, T]
	double dtheta(int i) const { return dtheta_.at(static_cast<std::size_t>(i)); }
	/// cumulative increment, i in [0, T]
	double theta_bar(int i) const { return theta_bar_.at(static_cast<std::size_t>(i)); }
	/// marginal variance lambda^2 (1 - exp(-2 theta_bar)), i in [0, T]
	double variance(int i) const { return v_.at(static_cast<std::size_t>(i)); }
	/// sigma_i^2 implied by the constraint, i in [1, T]
	double sigma2(int i) const { return 2.0 * lambda_ * lambda_ * dtheta(i); }

	void check_index(int i, int lo = 1) const
	{
		if (i < lo || i > T_)
			throw Error(ErrorCode::IndexOutOfRange,
				"step " + std::to_string(i) + " outside [" + std::to_string(lo) + ", " + std::to_string(T_) + "]");
	}

	bool operator==(const DiffusionSchedule& other) const
	{
		return T_ == other.T_ && lambda_ == other.lambda_ && terminal_decay_ == other.terminal_decay_ &&
			   profile_ == other.profile_;
	}

	friend DiffusionSchedule make_schedule(int T, double lambda, ThetaProfile profile, double terminal_decay);

private:
	int T_ = 0;
	double lambda_ = 0.0;
	double terminal_decay_ = 0.0;
	ThetaProfile profile_ = ThetaProfile::Cosine;
	std::vector<double> dtheta_;
	std::vector<double> theta_bar_;
	std::vector<double> v_;
};

inline constexpr double kDefaultLambda = 0.2;
inline constexpr double kDefaultTerminalDecay = 0.005;

/// Increments follow the profile, scaled so that exp(-theta_bar_T) equals
/// terminal_decay.
DiffusionSchedule make_schedule(int T, double lambda = kDefaultLambda, ThetaProfile profile = ThetaProfile::Cosine,
	double terminal_decay = kDefaultTerminalDecay);

nlohmann::json schedule_to_json(const DiffusionSchedule& sched);
DiffusionSchedule schedule_from_json(const nlohmann::json& j);

template <typename Scalar>
using Field = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
struct SdeState
{
	Field<Scalar> x;
	int i = 0;
};

template <typename Scalar>
struct Marginal
{
	Field<Scalar> mean;
	double var = 0.0;
};

namespace detail {

template <typename A, typename B>
void require_same_shape(const Eigen::ArrayBase<A>& a, const Eigen::ArrayBase<B>& b)
{
	if (a.rows() != b.rows() || a.cols() != b.cols())
		throw Error(ErrorCode::DimMismatch, "state and conditioning mean differ in shape");
}

} // namespace detail

/// mu + (x0 - mu) e^{-theta_bar_i}; defined for i in [0, T].
template <typename D1, typename D2>
Field<typename D1::Scalar> marginal_mean(
	const Eigen::ArrayBase<D1>& x0, const Eigen::ArrayBase<D2>& mu, const DiffusionSchedule& s, int i)
{
	s.check_index(i, 0);
	detail::require_same_shape(x0, mu);
	using Scalar = typename D1::Scalar;
	const auto decay = static_cast<Scalar>(std::exp(-s.theta_bar(i)));
	return mu.derived() + (x0.derived() - mu.derived()) * decay;
}

template <typename D1, typename D2>
Marginal<typename D1::Scalar> marginal(
	const Eigen::ArrayBase<D1>& x0, const Eigen::ArrayBase<D2>& mu, const DiffusionSchedule& s, int i)
{
	s.check_index(i);
	return {marginal_mean(x0, mu, s, i), s.variance(i)};
}

template <typename D1, typename D2, typename D3>
SdeState<typename D1::Scalar> sample_state(const Eigen::ArrayBase<D1>& x0, const Eigen::ArrayBase<D2>& mu,
	const DiffusionSchedule& s, int i, const Eigen::ArrayBase<D3>& noise)
{
	detail::require_same_shape(x0, noise);
	using Scalar = typename D1::Scalar;
	auto m = marginal(x0, mu, s, i);
	return {m.mean + static_cast<Scalar>(std::sqrt(m.var)) * noise.derived(), i};
}

/// Exact OU kernel from step i-1 to step i.
template <typename D1, typename D2, typename D3>
SdeState<typename D1::Scalar> forward_transition(const Eigen::ArrayBase<D1>& x_prev, const Eigen::ArrayBase<D2>& mu,
	const DiffusionSchedule& s, int i, const Eigen::ArrayBase<D3>& noise)
{
	s.check_index(i);
	detail::require_same_shape(x_prev, mu);
	detail::require_same_shape(x_prev, noise);
	using Scalar = typename D1::Scalar;
	const double a = std::exp(-s.dtheta(i));
	const double sd = s.lambda() * std::sqrt(1.0 - a * a);
	return {mu.derived() + (x_prev.derived() - mu.derived()) * static_cast<Scalar>(a) +
				static_cast<Scalar>(sd) * noise.derived(),
		i};
}

/// Gaussian score -noise / sqrt(v_i).
template <typename D>
Field<typename D::Scalar> score_from_noise(const Eigen::ArrayBase<D>& noise_hat, const DiffusionSchedule& s, int i)
{
	s.check_index(i, 0);
	const double v = s.variance(i);
	if (!(v > 0.0))
		throw Error(ErrorCode::DegenerateVariance, "score undefined at zero variance");
	using Scalar = typename D::Scalar;
	return -noise_hat.derived() / static_cast<Scalar>(std::sqrt(v));
}

/// One reverse-time Euler-Maruyama step from index i to i-1.
template <typename D1, typename D2, typename D3, typename D4>
Field<typename D1::Scalar> reverse_euler_step(const Eigen::ArrayBase<D1>& x_i, const Eigen::ArrayBase<D2>& mu,
	const Eigen::ArrayBase<D3>& score, const DiffusionSchedule& s, int i, const Eigen::ArrayBase<D4>& noise)
{
	s.check_index(i);
	detail::require_same_shape(x_i, mu);
	using Scalar = typename D1::Scalar;
	const auto dth = static_cast<Scalar>(s.dtheta(i));
	const auto g2 = static_cast<Scalar>(s.sigma2(i));
	const auto g = static_cast<Scalar>(std::sqrt(s.sigma2(i)));
	return x_i.derived() - (dth * (mu.derived() - x_i.derived()) - g2 * score.derived()) + g * noise.derived();
}

/// Mean of p(x_{i-1} | x_i, x0) for the exact OU chain.
template <typename D1, typename D2, typename D3>
Field<typename D1::Scalar> optimal_reverse_state(const Eigen::ArrayBase<D1>& x_i, const Eigen::ArrayBase<D2>& x0_hat,
	const Eigen::ArrayBase<D3>& mu, const DiffusionSchedule& s, int i)
{
	s.check_index(i);
	detail::require_same_shape(x_i, mu);
	detail::require_same_shape(x0_hat, mu);
	using Scalar = typename D1::Scalar;
	const double lam2 = s.lambda() * s.lambda();
	const double a = std::exp(-s.dtheta(i));
	const double b = std::exp(-s.theta_bar(i - 1));
	const double s2 = lam2 * (1.0 - a * a);
	const double q2 = lam2 * (1.0 - b * b);
	const double v = lam2 * (1.0 - a * a * b * b);
	const auto w_state = static_cast<Scalar>(a * q2 / v);
	const auto w_clean = static_cast<Scalar>(b * s2 / v);
	return mu.derived() + w_state * (x_i.derived() - mu.derived()) + w_clean * (x0_hat.derived() - mu.derived());
}

/// Inverts the sampling relation for x0 given a noise estimate.
template <typename D1, typename D2, typename D3>
Field<typename D1::Scalar> x0_from_noise(const Eigen::ArrayBase<D1>& x_i, const Eigen::ArrayBase<D2>& noise_hat,
	const Eigen::ArrayBase<D3>& mu, const DiffusionSchedule& s, int i)
{
	s.check_index(i);
	detail::require_same_shape(x_i, mu);
	detail::require_same_shape(x_i, noise_hat);
	using Scalar = typename D1::Scalar;
	const auto sd = static_cast<Scalar>(std::sqrt(s.variance(i)));
	const auto grow = static_cast<Scalar>(std::exp(s.theta_bar(i)));
	return mu.derived() + (x_i.derived() - sd * noise_hat.derived() - mu.derived()) * grow;
}

} // namespace demsde
