#include "demsde/sde.hpp"
#include "support.hpp"

#include "doctest.h"

#include <cmath>
#include <random>

using namespace demsde;
using Eigen::ArrayXXd;

namespace {

ArrayXXd scalar(double v) { return ArrayXXd::Constant(1, 1, v); }

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

struct Moments
{
	double mean = 0.0;
	double var = 0.0;
};

Moments moments(const std::vector<double>& xs)
{
	Moments m;
	for (double x : xs)
		m.mean += x;
	m.mean /= static_cast<double>(xs.size());
	for (double x : xs)
		m.var += (x - m.mean) * (x - m.mean);
	m.var /= static_cast<double>(xs.size() - 1);
	return m;
}

// Golden-section minimizer on [lo, hi].
template <typename F>
double golden_min(F f, double lo, double hi)
{
	const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
	double a = lo, b = hi;
	double c = b - phi * (b - a), d = a + phi * (b - a);
	double fc = f(c), fd = f(d);
	while (b - a > 1e-13) {
		if (fc < fd) {
			b = d;
			d = c;
			fd = fc;
			c = b - phi * (b - a);
			fc = f(c);
		} else {
			a = c;
			c = d;
			fc = fd;
			d = a + phi * (b - a);
			fd = f(d);
		}
	}
	return 0.5 * (a + b);
}

} // namespace

TEST_CASE("schedule scaling")
{
	auto one = make_schedule(1, 0.2, ThetaProfile::Constant, std::exp(-1.0));
	CHECK(one.dtheta(1) == doctest::Approx(1.0).epsilon(1e-14));

	auto flat = make_schedule(50, 0.2, ThetaProfile::Constant, 0.005);
	for (int i = 1; i <= 50; ++i)
		CHECK(flat.dtheta(i) == doctest::Approx(std::log(200.0) / 50.0).epsilon(1e-13));
	CHECK(std::log(200.0) / 50.0 == doctest::Approx(0.10597).epsilon(1e-4));

	for (auto profile : {ThetaProfile::Constant, ThetaProfile::Cosine})
		for (int T : {1, 7, 50, 100, 1000})
			for (double decay : {0.005, 0.1, 1e-4}) {
				auto s = make_schedule(T, 0.3, profile, decay);
				double sum = 0.0;
				for (int i = 1; i <= T; ++i)
					sum += s.dtheta(i);
				CHECK(std::abs(sum + std::log(decay)) < 1e-12);
				CHECK(std::abs(s.theta_bar(T) + std::log(decay)) < 1e-12);
			}
}

TEST_CASE("cosine profile shape and schedule invariants")
{
	auto s = make_schedule(40, 0.2);
	CHECK(s.profile() == ThetaProfile::Cosine);
	const double k = s.dtheta(1) / (1.0 - std::cos(std::acos(-1.0) / 40));
	for (int i = 1; i <= 40; ++i) {
		CHECK(s.dtheta(i) == doctest::Approx(k * (1.0 - std::cos(std::acos(-1.0) * i / 40))).epsilon(1e-12));
		CHECK(s.dtheta(i) > 0.0);
		CHECK(s.theta_bar(i) > s.theta_bar(i - 1));
		CHECK(s.variance(i) > s.variance(i - 1));
		CHECK(s.variance(i) < 0.04);
		CHECK(s.sigma2(i) / s.dtheta(i) == doctest::Approx(2 * 0.04).epsilon(1e-14));
	}
	CHECK(s.theta_bar(0) == 0.0);
	CHECK(s.theta_bar(1) == s.dtheta(1));
	CHECK(s.variance(40) / 0.04 >= 0.99);
}

TEST_CASE("schedule validation and serialization")
{
	CHECK(code_of([] { make_schedule(0); }) == ErrorCode::BadParam);
	CHECK(code_of([] { make_schedule(10, -1.0); }) == ErrorCode::BadParam);
	CHECK(code_of([] { make_schedule(10, 0.2, ThetaProfile::Cosine, 1.0); }) == ErrorCode::BadParam);
	CHECK(code_of([] { parse_profile("linear"); }) == ErrorCode::BadParam);
	CHECK(parse_profile("cosine-increasing") == ThetaProfile::Cosine);
	auto s = make_schedule(33, 0.25, ThetaProfile::Constant, 0.01);
	auto j = schedule_to_json(s);
	CHECK(j.at("T") == 33);
	CHECK(schedule_from_json(j) == s);
}

TEST_CASE("marginal closed form")
{
	auto s = make_schedule(1, 0.5, ThetaProfile::Constant, std::exp(-1.0));
	auto m = marginal(scalar(1.0), scalar(0.0), s, 1);
	CHECK(m.mean(0, 0) == doctest::Approx(0.367879).epsilon(1e-6));
	CHECK(m.var == doctest::Approx(0.216166).epsilon(1e-6));

	auto far = make_schedule(10, 0.2, ThetaProfile::Cosine, 1e-12);
	auto lim = marginal(scalar(5.0), scalar(0.3), far, 10);
	CHECK(std::abs(lim.mean(0, 0) - 0.3) < 1e-10);
	CHECK(lim.var == doctest::Approx(0.04).epsilon(1e-12));

	const ArrayXXd mu = testsupport::random_field(4, 5, 1);
	auto sched = make_schedule(20);
	for (int i = 1; i <= 20; ++i)
		CHECK((marginal(mu, mu, sched, i).mean == mu).all());

	CHECK(code_of([&] { marginal(mu, mu, sched, 0); }) == ErrorCode::IndexOutOfRange);
	CHECK(code_of([&] { marginal(mu, mu, sched, 21); }) == ErrorCode::IndexOutOfRange);
	CHECK(code_of([&] { marginal(mu, ArrayXXd::Zero(4, 4).eval(), sched, 3); }) == ErrorCode::DimMismatch);
}

TEST_CASE("marginal agrees with Euler-Maruyama paths of the SDE")
{
	// theta = 1 on [0, 1]: theta_bar = 1, sigma^2 = 2 lambda^2 theta
	const double lam = 0.5, x0 = 1.0, mu = 0.0;
	const int paths = 20000, sub = 1000;
	const double dt = 1.0 / sub, sigma = std::sqrt(2.0 * lam * lam);
	std::mt19937_64 rng(17);
	std::normal_distribution<double> n01;
	std::vector<double> end(paths);
	for (int p = 0; p < paths; ++p) {
		double x = x0;
		for (int k = 0; k < sub; ++k)
			x += (mu - x) * dt + sigma * std::sqrt(dt) * n01(rng);
		end[p] = x;
	}
	const Moments em = moments(end);
	auto s = make_schedule(1, lam, ThetaProfile::Constant, std::exp(-1.0));
	auto m = marginal(scalar(x0), scalar(mu), s, 1);
	const double se = std::sqrt(m.var / paths);
	CHECK(std::abs(em.mean - m.mean(0, 0)) < 3.0 * se);
	CHECK(std::abs(em.var / m.var - 1.0) < 0.03);
}

TEST_CASE("sample_state moments")
{
	auto s = make_schedule(30, 0.2);
	const ArrayXXd x0 = scalar(0.9), mu = scalar(0.2);
	auto zero = sample_state(x0, mu, s, 12, scalar(0.0));
	CHECK(zero.x(0, 0) == marginal(x0, mu, s, 12).mean(0, 0));
	CHECK(zero.i == 12);

	std::mt19937_64 rng(3);
	std::normal_distribution<double> n01;
	const int n = 100000;
	std::vector<double> xs(n);
	for (int k = 0; k < n; ++k)
		xs[k] = sample_state(x0, mu, s, 12, scalar(n01(rng))).x(0, 0);
	const Moments mm = moments(xs);
	const auto m = marginal(x0, mu, s, 12);
	CHECK(std::abs(mm.mean / m.mean(0, 0) - 1.0) < 0.01);
	CHECK(std::abs(std::sqrt(mm.var) / std::sqrt(m.var) - 1.0) < 0.01);

	// terminal saturation: bias bounded by terminal_decay * |x0 - mu|
	const double eps = 0.37;
	auto term = sample_state(x0, mu, s, 30, scalar(eps));
	CHECK(std::abs(term.x(0, 0) - (0.2 + 0.2 * eps)) <= 0.005 * 0.7 + 0.2 * 0.01 * std::abs(eps));
}

TEST_CASE("terminal law over many starting points")
{
	auto s = make_schedule(50, 0.2);
	std::mt19937_64 rng(8);
	std::normal_distribution<double> n01;
	std::uniform_real_distribution<double> u(0.0, 1.0);
	const double mu = 0.5;
	std::vector<double> xs(100000);
	for (auto& x : xs)
		x = sample_state(scalar(u(rng)), scalar(mu), s, 50, scalar(n01(rng))).x(0, 0);
	const Moments m = moments(xs);
	CHECK(std::abs(m.mean / mu - 1.0) < 0.01);
	CHECK(std::abs(std::sqrt(m.var) / 0.2 - 1.0) < 0.02);
}

TEST_CASE("forward transitions compose to the marginal")
{
	const ArrayXXd x0 = testsupport::random_field(3, 3, 4), mu = testsupport::random_field(3, 3, 5);
	for (int T : {10, 50, 100}) {
		auto s = make_schedule(T, 0.2);
		ArrayXXd x = x0;
		for (int i = 1; i <= T; ++i) {
			x = forward_transition(x, mu, s, i, ArrayXXd::Zero(3, 3).eval()).x;
			CHECK((x - marginal(x0, mu, s, i).mean).abs().maxCoeff() < 1e-12);
		}
	}

	auto s = make_schedule(20, 0.2);
	std::mt19937_64 rng(6);
	std::normal_distribution<double> n01;
	std::vector<double> ends(10000);
	for (auto& e : ends) {
		ArrayXXd x = scalar(1.0);
		for (int i = 1; i <= 8; ++i)
			x = forward_transition(x, scalar(0.0), s, i, scalar(n01(rng))).x;
		e = x(0, 0);
	}
	const Moments m = moments(ends);
	const auto ref = marginal(scalar(1.0), scalar(0.0), s, 8);
	CHECK(std::abs(m.mean - ref.mean(0, 0)) < 4.0 * std::sqrt(ref.var / 10000));
	// sd of a sample variance is about var * sqrt(2/n)
	CHECK(std::abs(m.var - ref.var) < 4.0 * ref.var * std::sqrt(2.0 / 10000));
}

TEST_CASE("forward transition limits")
{
	auto fine = make_schedule(200000, 0.2, ThetaProfile::Constant, 0.005);
	auto step = forward_transition(scalar(0.7), scalar(0.1), fine, 5, scalar(0.0)).x(0, 0);
	CHECK(std::abs(step - 0.7) < 1e-4);
	auto s = make_schedule(10);
	CHECK(forward_transition(scalar(0.3), scalar(0.3), s, 4, scalar(0.0)).x(0, 0) == 0.3);
	CHECK(code_of([&] { forward_transition(scalar(0.3), scalar(0.3), s, 0, scalar(0.0)); }) ==
		  ErrorCode::IndexOutOfRange);
}

TEST_CASE("score from noise")
{
	auto s = make_schedule(25, 0.2);
	CHECK((score_from_noise(ArrayXXd::Zero(2, 2).eval(), s, 5) == 0.0).all());

	const ArrayXXd x0 = testsupport::random_field(3, 4, 7), mu = testsupport::random_field(3, 4, 8);
	const ArrayXXd eps = testsupport::random_field(3, 4, 9, -2.0, 2.0);
	for (int i : {1, 6, 25}) {
		const auto x = sample_state(x0, mu, s, i, eps).x;
		const auto m = marginal(x0, mu, s, i);
		const ArrayXXd direct = -(x - m.mean) / m.var;
		CHECK((direct - score_from_noise(eps, s, i)).abs().maxCoeff() < 1e-10);

		// central differences of the Gaussian log-density
		auto logp = [&](double xv, double mean) { return -0.5 * (xv - mean) * (xv - mean) / m.var; };
		const double h = 1e-5;
		const double fd = (logp(x(1, 2) + h, m.mean(1, 2)) - logp(x(1, 2) - h, m.mean(1, 2))) / (2 * h);
		CHECK(std::abs(fd - score_from_noise(eps, s, i)(1, 2)) < 1e-6);
	}
	CHECK(code_of([&] { score_from_noise(eps, s, 0); }) == ErrorCode::DegenerateVariance);
}

TEST_CASE("reverse Euler step")
{
	auto s = make_schedule(100, 0.2);
	CHECK(reverse_euler_step(scalar(0.4), scalar(0.4), scalar(0.0), s, 17, scalar(0.0))(0, 0) == 0.4);

	// exact score of the point-mass start, noise off
	for (double x0 : {1.0, -0.4, 0.05}) {
		const double mu = 0.25;
		ArrayXXd x = marginal(scalar(x0), scalar(mu), s, 100).mean;
		double prev = std::abs(x(0, 0) - x0);
		bool monotone = true;
		for (int i = 100; i >= 1; --i) {
			const auto m = marginal(scalar(x0), scalar(mu), s, i);
			const ArrayXXd score = -(x - m.mean) / m.var;
			x = reverse_euler_step(x, scalar(mu), score, s, i, scalar(0.0));
			const double d = std::abs(x(0, 0) - x0);
			monotone = monotone && d <= prev + 1e-15;
			prev = d;
		}
		CHECK(monotone);
		CHECK(std::abs(x(0, 0) - x0) < 0.01 * std::abs(x0 - mu));
	}
}

TEST_CASE("optimal reverse state closed form")
{
	auto s = make_schedule(30, 0.2);
	const ArrayXXd xi = testsupport::random_field(2, 3, 1), x0 = testsupport::random_field(2, 3, 2);
	const ArrayXXd mu = testsupport::random_field(2, 3, 3);
	CHECK((optimal_reverse_state(xi, x0, mu, s, 1) - x0).abs().maxCoeff() < 1e-15);

	std::mt19937_64 rng(4);
	std::uniform_int_distribution<int> pick_T(2, 120);
	for (int trial = 0; trial < 50; ++trial) {
		const int T = pick_T(rng);
		auto r = make_schedule(T, 0.1 + 0.4 * (trial % 5) / 5.0, trial % 2 ? ThetaProfile::Cosine : ThetaProfile::Constant,
			0.001 + 0.01 * (trial % 3));
		const int i = 1 + trial % T;
		const ArrayXXd at_i = marginal_mean(x0, mu, r, i);
		const ArrayXXd at_prev = marginal_mean(x0, mu, r, i - 1);
		CHECK((optimal_reverse_state(at_i, x0, mu, r, i) - at_prev).abs().maxCoeff() < 1e-12);
	}
}

TEST_CASE("optimal reverse state matches golden-section minimization")
{
	// constant profile: dtheta = 0.1 and theta_bar_4 = 0.4 at i = 5
	auto s = make_schedule(5, 0.3, ThetaProfile::Constant, std::exp(-0.5));
	REQUIRE(s.dtheta(5) == doctest::Approx(0.1).epsilon(1e-14));
	REQUIRE(s.theta_bar(4) == doctest::Approx(0.4).epsilon(1e-14));
	const double xi = 0.8, x0 = 0.2, mu = 0.0, lam2 = 0.09;
	const double a = std::exp(-0.1), b = std::exp(-0.4);
	auto nll = [&](double x) {
		const double s2 = lam2 * (1 - a * a), q2 = lam2 * (1 - b * b);
		return (xi - mu - (x - mu) * a) * (xi - mu - (x - mu) * a) / (2 * s2) +
			   (x - mu - (x0 - mu) * b) * (x - mu - (x0 - mu) * b) / (2 * q2);
	};
	const double ref = golden_min(nll, -3.0, 3.0);
	CHECK(std::abs(optimal_reverse_state(scalar(xi), scalar(x0), scalar(mu), s, 5)(0, 0) - ref) < 1e-8);
}

TEST_CASE("optimal reverse state interpolates")
{
	auto s = make_schedule(40, 0.2);
	std::mt19937_64 rng(12);
	std::uniform_real_distribution<double> u(-1.0, 1.0);
	for (int k = 0; k < 200; ++k) {
		const double xi = u(rng), x0 = u(rng), mu = u(rng);
		const int i = 1 + k % 40;
		const double y = optimal_reverse_state(scalar(xi), scalar(x0), scalar(mu), s, i)(0, 0);
		CHECK(y >= std::min({xi, x0, mu}) - 1e-12);
		CHECK(y <= std::max({xi, x0, mu}) + 1e-12);
	}
}

TEST_CASE("x0 from noise")
{
	auto s = make_schedule(50, 0.2);
	const ArrayXXd x0 = testsupport::random_field(4, 4, 1), mu = testsupport::random_field(4, 4, 2);
	const ArrayXXd eps = testsupport::random_field(4, 4, 3, -2.0, 2.0);
	for (int i : {1, 25, 50}) {
		const auto x = sample_state(x0, mu, s, i, eps).x;
		CHECK((x0_from_noise(x, eps, mu, s, i) - x0).abs().maxCoeff() < 1e-10);
		const ArrayXXd shifted = x0_from_noise(x, (eps + 1.0).eval(), mu, s, i);
		const double expected = std::sqrt(s.variance(i)) * std::exp(s.theta_bar(i));
		CHECK(((x0_from_noise(x, eps, mu, s, i) - shifted) - expected).abs().maxCoeff() < 1e-9 * expected);
	}
	CHECK((x0_from_noise(mu, ArrayXXd::Zero(4, 4).eval(), mu, s, 9) - mu).abs().maxCoeff() < 1e-15);
}

TEST_CASE("deterministic reverse pass with the true noise recovers x0")
{
	const ArrayXXd x0 = testsupport::random_field(5, 5, 21), mu = testsupport::random_field(5, 5, 22);
	for (int T : {10, 50, 100}) {
		auto s = make_schedule(T, 0.2);
		ArrayXXd x = sample_state(x0, mu, s, T, testsupport::random_field(5, 5, 23, -2.0, 2.0)).x;
		for (int i = T; i >= 1; --i) {
			const ArrayXXd eps = (x - marginal_mean(x0, mu, s, i)) / std::sqrt(s.variance(i));
			x = optimal_reverse_state(x, x0_from_noise(x, eps, mu, s, i), mu, s, i);
		}
		CHECK((x - x0).abs().maxCoeff() < 1e-6);
	}
}
