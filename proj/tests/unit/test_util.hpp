#pragma once

#include "sslvqa/autodiff.hpp"
#include "sslvqa/rng.hpp"

#include <filesystem>
#include <string>

namespace testutil {

inline Eigen::MatrixXd random_matrix(sslvqa::Rng& rng, int rows, int cols, double scale = 1.0) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = scale * rng.normal();
    return m;
}

/// Fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("sslvqa_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

} // namespace testutil
