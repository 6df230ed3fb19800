#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dynembed/common.hpp"
#include "dynembed/config.hpp"
#include "dynembed/netseries.hpp"

namespace dynembed {

enum class Assignment {
  Balanced,  // deterministic proportional split into contiguous node blocks
  Random,    // i.i.d. draws from the sequence prior
};

enum class DegreeModel {
  None,
  Uniform,   // w_i ~ U(weight_low, 1], i.i.d.
  Explicit,  // weights given per node
};

// Dynamic (optionally degree-corrected) stochastic block model.
//
// A node's latent state is a community sequence (one community per time,
// switches allowed) drawn from `sequences` with `probabilities`, plus a
// degree weight. Edge probability at time t is
// rho * w_i * w_j * B[t](c_i(t), c_j(t)).
struct DsbmSpec {
  int K = 1;
  int T = 1;
  std::vector<Matrix> B;
  std::vector<std::vector<int>> sequences;  // 0-based community per time
  std::vector<double> probabilities;
  Assignment assignment = Assignment::Balanced;
  DegreeModel degree = DegreeModel::None;
  double weight_low = 0.3;
  std::vector<double> weights;
  double rho = 1.0;
  int default_n = 0;
  std::uint64_t default_seed = 0;

  // Throws ParameterError on any violated constraint.
  void validate() const;

  // Keys: K, T, B1..BT, sequences (1-based, rows separated by ';'),
  // probabilities, assignment (balanced|random), degree (none|uniform|explicit),
  // weight_low, weights, rho, n, seed. When sequences is absent, each
  // community is a constant sequence with equal probability.
  static DsbmSpec from_config(const KeyValueConfig& cfg);
  static DsbmSpec load(const std::filesystem::path& path);
};

// Per-node latent positions: community per time and degree weight.
struct LatentSeries {
  IndexMatrix community;  // n x T, 0-based
  Vector weight;          // n, all ones without degree correction
  std::vector<int> sequence;  // index into DsbmSpec::sequences per node

  int num_nodes() const noexcept { return static_cast<int>(community.rows()); }
  int num_times() const noexcept { return static_cast<int>(community.cols()); }
};

LatentSeries draw_latent(const DsbmSpec& spec, int n, std::uint64_t seed);

// P[t](i, j) = rho * w_i * w_j * B[t](c_i(t), c_j(t)), diagonal included.
// Throws ParameterError if any entry exceeds 1.
std::vector<Matrix> gram_matrices(const DsbmSpec& spec, const LatentSeries& z);

// Independent Bernoulli(P(i, j)) for i < j, symmetrised, zero diagonal.
// Draw (t, i, j) depends only on (seed, t, i, j).
GraphSeries sample_adjacency(std::span<const Matrix> gram, std::uint64_t seed);

struct DsbmSample {
  GraphSeries graphs;
  LatentSeries latent;
  std::vector<Matrix> gram;
};

DsbmSample sample_dsbm(const DsbmSpec& spec, int n, std::uint64_t seed);

// Four communities over two steps: communities 1 and 2 merge at step 2,
// community 3 moves, community 4 is unchanged; equal fixed memberships.
DsbmSpec four_community_merge_spec();

}  // namespace dynembed
