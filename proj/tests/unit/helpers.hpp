#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "dynembed/netseries.hpp"

namespace testing {

using dynembed::GraphSeries;
using dynembed::Matrix;

// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("dynembed_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline GraphSeries random_series(int n, int T, double density, std::mt19937_64& rng) {
  std::bernoulli_distribution edge(density);
  std::vector<std::vector<std::pair<int, int>>> edges(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (edge(rng)) edges[static_cast<std::size_t>(t)].emplace_back(i, j);
      }
    }
  }
  return GraphSeries::from_edges(n, edges);
}

inline Matrix random_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = g(rng);
  }
  return m;
}

inline Matrix random_orthogonal(int d, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Matrix> qr(random_matrix(d, d, rng));
  return qr.householderQ() * Matrix::Identity(d, d);
}

}  // namespace testing
