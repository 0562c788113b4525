#include "demsde/sde.hpp"

#include <numbers>

namespace demsde {

ThetaProfile parse_profile(const std::string& name)
{
	if (name == "constant")
		return ThetaProfile::Constant;
	if (name == "cosine" || name == "cosine-increasing")
		return ThetaProfile::Cosine;
	throw Error(ErrorCode::BadParam, "unknown theta profile '" + name + "'");
}

std::string profile_name(ThetaProfile profile)
{
	return profile == ThetaProfile::Constant ? "constant" : "cosine";
}

DiffusionSchedule make_schedule(int T, double lambda, ThetaProfile profile, double terminal_decay)
{
	if (T < 1)
		throw Error(ErrorCode::BadParam, "T must be >= 1");
	if (!(lambda > 0.0) || !std::isfinite(lambda))
		throw Error(ErrorCode::BadParam, "lambda must be positive");
	if (!(terminal_decay > 0.0 && terminal_decay < 1.0))
		throw Error(ErrorCode::BadParam, "terminal_decay must lie in (0,1)");

	DiffusionSchedule s;
	s.T_ = T;
	s.lambda_ = lambda;
	s.terminal_decay_ = terminal_decay;
	s.profile_ = profile;

	std::vector<double> shape(static_cast<std::size_t>(T) + 1, 0.0);
	for (int i = 1; i <= T; ++i)
		shape[static_cast<std::size_t>(i)] =
			profile == ThetaProfile::Constant ? 1.0 : 1.0 - std::cos(std::numbers::pi * i / T);

	double total = 0.0;
	for (int i = 1; i <= T; ++i)
		total += shape[static_cast<std::size_t>(i)];
	const double target = -std::log(terminal_decay);

	s.dtheta_.assign(static_cast<std::size_t>(T) + 1, 0.0);
	s.theta_bar_.assign(static_cast<std::size_t>(T) + 1, 0.0);
	s.v_.assign(static_cast<std::size_t>(T) + 1, 0.0);
	const double lam2 = lambda * lambda;
	for (int i = 1; i <= T; ++i) {
		const auto k = static_cast<std::size_t>(i);
		s.dtheta_[k] = target * shape[k] / total;
		s.theta_bar_[k] = s.theta_bar_[k - 1] + s.dtheta_[k];
	}
	// Pin the last cumulative value so exp(-theta_bar_T) hits the target exactly.
	s.theta_bar_[static_cast<std::size_t>(T)] = target;
	for (int i = 1; i <= T; ++i) {
		const auto k = static_cast<std::size_t>(i);
		s.v_[k] = lam2 * -std::expm1(-2.0 * s.theta_bar_[k]);
	}
	return s;
}

nlohmann::json schedule_to_json(const DiffusionSchedule& sched)
{
	return {
		{"T", sched.steps()},
		{"profile", profile_name(sched.profile())},
		{"lambda", sched.lambda()},
		{"terminal_decay", sched.terminal_decay()},
	};
}

DiffusionSchedule schedule_from_json(const nlohmann::json& j)
{
	try {
		return make_schedule(j.at("T").get<int>(), j.value("lambda", kDefaultLambda),
			parse_profile(j.value("profile", std::string("cosine"))),
			j.value("terminal_decay", kDefaultTerminalDecay));
	} catch (const nlohmann::json::exception& e) {
		throw Error(ErrorCode::ParseError, std::string("schedule: ") + e.what());
	}
}

} // namespace demsde
