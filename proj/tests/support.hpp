#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <random>
#include <string>

namespace testsupport {

/// Fresh scratch directory under the system temp dir, removed on scope exit.
class ScratchDir
{
public:
	explicit ScratchDir(const std::string& tag)
	{
		std::random_device rd;
		path_ = std::filesystem::temp_directory_path() / ("demsde_" + tag + "_" + std::to_string(rd()));
		std::filesystem::create_directories(path_);
	}
	~ScratchDir()
	{
		std::error_code ec;
		std::filesystem::remove_all(path_, ec);
	}
	ScratchDir(const ScratchDir&) = delete;
	ScratchDir& operator=(const ScratchDir&) = delete;

	const std::filesystem::path& path() const { return path_; }
	std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

private:
	std::filesystem::path path_;
};

inline Eigen::ArrayXXd random_field(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double lo = 0.0,
	double hi = 1.0)
{
	std::mt19937_64 rng(seed);
	std::uniform_real_distribution<double> u(lo, hi);
	Eigen::ArrayXXd out(rows, cols);
	for (Eigen::Index k = 0; k < out.size(); ++k)
		out.data()[k] = u(rng);
	return out;
}

} // namespace testsupport
