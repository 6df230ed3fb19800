#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dynembed/common.hpp"
#include "dynembed/linalg.hpp"
#include "dynembed/netseries.hpp"

namespace dynembed {

enum class EmbedMethod { Uase, Omnibus, Independent, Separate };

std::string to_string(EmbedMethod m);
EmbedMethod parse_method(const std::string& name);

struct Embedding {
  EmbedMethod method = EmbedMethod::Uase;
  std::vector<Matrix> Y;  // per time, n x dims[t]
  Matrix X;               // left factor, UASE only
  std::vector<int> dims;
  // One entry per decomposition: a single one for UASE and omnibus, one per
  // time for the per-snapshot methods.
  std::vector<Vector> singular_values;
  // Negative eigenvalues among the retained ones (symmetric decompositions).
  std::vector<int> negative_eigenvalues;
  std::vector<std::string> warnings;
  std::vector<std::string> node_labels;
  std::vector<std::string> time_labels;

  int num_times() const noexcept { return static_cast<int>(Y.size()); }
  int num_nodes() const noexcept { return Y.empty() ? 0 : static_cast<int>(Y.front().rows()); }
  int max_dim() const noexcept;
  // Y[t] padded with zero columns to `width` columns.
  Matrix padded(int t, int width) const;
};

// Unfolded adjacency spectral embedding: rank-d SVD of (A_1 | ... | A_T),
// Y = V S^{1/2} split into T blocks, X = U S^{1/2}.
Embedding uase(const GraphSeries& g, int d, std::uint64_t seed, const SvdOptions& options = {});

// Same on dense matrices, e.g. Gram matrices or weighted graphs.
Embedding uase(std::span<const Matrix> blocks, int d, std::uint64_t seed, const SvdOptions& options = {});

struct OmnibusOptions {
  std::uint64_t memory_budget = memory_budget_bytes();
  // Past the budget, run the eigensolver on block products instead of failing.
  bool allow_matrix_free = false;
  SvdOptions svd;
};

// Spectral embedding of the nT x nT matrix with blocks (A_s + A_t) / 2,
// scaled by |lambda|^{1/2}; negative eigenvalues are counted.
Embedding omnibus(const GraphSeries& g, int d, std::uint64_t seed, const OmnibusOptions& options = {});

// The dense omnibus matrix (for tests and small inputs).
Matrix omnibus_matrix(const GraphSeries& g);

// ASE of each snapshot at its own rank, same seed at every time.
Embedding independent_ase(const GraphSeries& g, std::span<const int> dims, std::uint64_t seed,
                          const SvdOptions& options = {});

struct TemporalWeights {
  enum class Kind { Constant, Exponential, Sliding, Custom };
  Kind kind = Kind::Constant;
  int window = 0;       // lags 0..window-1; 0 means the whole series
  double lambda = 0.5;  // forgetting factor for Exponential
  std::vector<double> custom;

  static TemporalWeights constant(int window = 0);
  static TemporalWeights exponential(double lambda, int window = 0);
  static TemporalWeights sliding(int window);
  static TemporalWeights from_values(std::vector<double> w);

  // w_0, w_1, ... for a series of length T.
  std::vector<double> values(int T) const;
};

// Abar_t = (S / S_t) sum_k w_k A_{t-k}, where S is the total weight and S_t
// the weight of the lags that exist at time t.
SparseMatrix temporal_average(const GraphSeries& g, int t, const TemporalWeights& weights);

Embedding separate_embed(const GraphSeries& g, const TemporalWeights& weights, int d, std::uint64_t seed,
                         const SvdOptions& options = {});

struct DimensionSelection {
  int d_hat = 1;
  Vector singular_values;
  Vector profile;  // log-likelihood at split q = 1..p-1
};

// Two-group Gaussian profile likelihood with a common variance over the
// scree; d_hat is the size of the leading group (first maximiser).
DimensionSelection profile_likelihood(const Vector& singular_values);

// max_d <= 0 uses min(rows, cols, 100) values.
DimensionSelection select_dimension(const SparseMatrix& m, int max_d, std::uint64_t seed,
                                    const SvdOptions& options = {});
DimensionSelection select_dimension(const Matrix& m, int max_d, std::uint64_t seed, const SvdOptions& options = {});

}  // namespace dynembed
