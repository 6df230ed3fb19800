#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dynembed/common.hpp"
#include "dynembed/embedders.hpp"
#include "dynembed/linalg.hpp"

namespace dynembed {

// Gaussian mixture with a full covariance per component.
struct GmmModel {
  int G = 0;
  Vector weights;                  // G, sums to 1
  Matrix means;                    // G x D
  std::vector<Matrix> covariances;  // G matrices, D x D
  double loglik = 0.0;
  double bic = 0.0;
  int iterations = 0;
  bool converged = false;
  bool regularized = false;  // the covariance penalty dominated some direction
  // Objective after each E-step: log-likelihood minus psi/2 sum_g tr(C_g^{-1}),
  // psi = 1e-6 tr(C) / D for the pooled covariance C. EM never decreases it.
  std::vector<double> loglik_trace;

  int dim() const noexcept { return static_cast<int>(means.cols()); }
};

// G - 1 + G D + G D (D + 1) / 2.
int gmm_parameter_count(int G, int D);

struct GmmOptions {
  std::vector<int> grid{1, 2, 3};
  int restarts = 10;
  std::uint64_t seed = 0;
  int max_iterations = 500;
  double tolerance = 1e-7;  // relative log-likelihood change
};

// EM from k-means++ seeds; the best of `restarts` runs by log-likelihood.
GmmModel fit_gmm(const Matrix& points, int G, const GmmOptions& options);

struct GmmSelection {
  GmmModel best;
  std::vector<std::pair<int, double>> bic_table;  // (G, BIC) per grid value
  std::vector<std::string> warnings;
};

// Fits every G in the grid and keeps the BIC minimiser (lowest G on ties).
GmmSelection fit_gmm_bic(const Matrix& points, const GmmOptions& options);

double gmm_loglik(const GmmModel& model, const Matrix& points);

struct ClusterAssignment {
  std::vector<int> labels;
  Matrix responsibilities;  // N x G
  Vector max_posterior;
};

// MAP labels; ties go to the lowest component index.
ClusterAssignment assign(const GmmModel& model, const Matrix& points);

// Rows of per-time embeddings stacked time-major, all-zero rows dropped.
struct PooledPoints {
  Matrix points;
  std::vector<std::pair<int, int>> index;  // (node, time) of each row
};

PooledPoints pool_spherical(const Embedding& emb, AngleRange range = AngleRange::ZeroToTwoPi);
PooledPoints pool_raw(const Embedding& emb);

// counts(t, g): points at time t assigned to component g; optional node
// classes split the table per class.
struct ProportionRow {
  std::string node_class;
  int t = 0;
  int cluster = 0;
  int count = 0;
  double proportion = 0.0;  // among the class's active nodes at time t
};

std::vector<ProportionRow> proportion_table(const ClusterAssignment& assignment, const PooledPoints& pooled, int T,
                                            int G, const std::vector<std::string>& node_class = {});

}  // namespace dynembed
