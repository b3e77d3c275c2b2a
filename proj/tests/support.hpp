#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "tcbc/types.hpp"

namespace tcbc::test {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    Matrix m(rows, cols);
    for (auto& v : m.data()) v = normal(rng);
    return m;
}

inline ClassDistribution random_distribution(std::size_t classes, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    std::vector<double> w(classes);
    for (auto& v : w) v = u(rng);
    return ClassDistribution::from_counts(w, DistributionKind::EstimatedTrain);
}

/// Fresh empty directory under the test's working directory.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::current_path() / "scratch" / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace tcbc::test
