#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dynembed/common.hpp"
#include "dynembed/linalg.hpp"
#include "dynembed/models.hpp"

namespace dynembed {

// Latent-position kernel with finite support.
//
// At time t the latent space has atoms 0..m_t-1 and f(a, b) = values[t](a, b)
// (without the sparsity factor). A node's trajectory is one of the support
// sequences, support[s][t] being its atom at time t.
struct FiniteKernel {
  std::vector<Matrix> values;
  std::vector<std::vector<int>> support;
  std::vector<double> probabilities;
  double rho = 1.0;

  int num_times() const noexcept { return static_cast<int>(values.size()); }
  int num_atoms(int t) const { return static_cast<int>(values.at(static_cast<std::size_t>(t)).rows()); }
  void validate() const;
};

// Atoms are communities and sequences are the spec's membership sequences.
// Requires DegreeModel::None; use the latent overload otherwise.
FiniteKernel finite_kernel(const DsbmSpec& spec);

struct EmpiricalKernel {
  FiniteKernel kernel;
  std::vector<int> node_support;  // support sequence of each node
};

// Support built from the realised latent series: atoms are the distinct
// (community, weight) pairs at each time, probabilities are frequencies.
EmpiricalKernel finite_kernel(const DsbmSpec& spec, const LatentSeries& z);

// Explicit multilayer factorisation f(s_t, b) = phi(s) Lambda_t phi_t(b)^T.
struct MrdpgParams {
  int d = 0;
  std::vector<int> dt;
  Matrix X_points;               // one row phi(s) per support sequence
  std::vector<Matrix> Y_points;  // per time, one row phi_t(a) per atom
  std::vector<Matrix> Lambda;    // per time, d x d_t
  int p = 0;                     // positive eigenvalues of the stacked kernel
  int q = 0;                     // negative eigenvalues
  double reconstruction_error = 0.0;

  // Intermediate objects of the construction.
  Matrix phi_hat;               // stacked kernel factor, one row per (t, atom)
  Vector signature;             // +-1 per column of phi_hat
  Matrix M;                     // orthonormal rows spanning the xi(s)
  std::vector<Matrix> N;        // per time, orthonormal rows spanning phi_hat(a@t)
  Matrix Pi;                    // M D N^T
  Vector Pi_singular_values;

  FiniteKernel kernel;

  // (Lambda_1 | ... | Lambda_T).
  Matrix lambda_concat() const;
};

// Singular values at or below rel_tol * sigma_1 are pruned at every rank
// decision. Throws InvalidArgument on an inconsistent kernel.
MrdpgParams construct_mrdpg(const FiniteKernel& kernel, double rel_tol = 1e-10);

// rho^{1/2} phi(Z_i) and rho^{1/2} phi_t(Z_i^{(t)}) for nodes mapped to
// support sequences; P^{(t)} = X Lambda_t Y_t^T.
Matrix left_positions(const MrdpgParams& params, std::span<const int> node_support);
Matrix right_positions(const MrdpgParams& params, std::span<const int> node_support, int t);

struct MomentMatrices {
  Matrix Delta_X;
  std::vector<Matrix> Delta_Y_blocks;
  Matrix Delta_Y;
  Vector Sigma_tilde;  // non-increasing
  Matrix V_tilde;
  Matrix L_tilde;
  Matrix R_star;
};

MomentMatrices compute_moments(const MrdpgParams& params);

enum class Regime {
  Dense,   // weight f (1 - f), for rho = 1
  Sparse,  // weight f, for rho -> 0
  Exact,   // weight f (1 - rho f), the finite-n variance
};

struct ErrorCovariance {
  Matrix sigma;       // Sigma_t(z), d x d
  Matrix covariance;  // R_* Sigma_t(z) R_*^T
  bool regime_mismatch = false;
  std::string note;
};

// `atom` is an atom index at time t; the expectation runs over the support.
ErrorCovariance theoretical_error_covariance(const MrdpgParams& params, const MomentMatrices& moments, int atom,
                                             int t, Regime regime);

enum class Exchangeability { Exchangeable, UpToDegree, Neither };

struct ExchangeVerdict {
  Exchangeability kind = Exchangeability::Neither;
  double alpha = 1.0;  // a = alpha * b when proportional
  double deviation = 0.0;
};

std::string to_string(Exchangeability e);

// Compares two kernel rows: equal, positive multiples, or neither.
ExchangeVerdict compare_rows(const Vector& a, const Vector& b, double tol = 1e-9);

// f(atom, zeta_t) against f(atom2, zeta_t2) over the support sequences with
// positive probability.
ExchangeVerdict exchangeability_check(const FiniteKernel& kernel, int atom, int t, int atom2, int t2,
                                      double tol = 1e-9);

// Node-level version on Gram rows P^{(t)}_i and P^{(t2)}_j.
ExchangeVerdict exchangeability_check(std::span<const Matrix> gram, int i, int t, int j, int t2,
                                      double tol = 1e-9);

struct NoiseFreeEmbedding {
  std::vector<Matrix> Y;  // per time, n x d
  Matrix X;               // n x d
  TruncatedSvd svd;
  int rank = 0;           // numerical rank of (P_1 | ... | P_T)
  std::vector<std::string> warnings;
};

// Unfolded embedding of the Gram matrices themselves.
NoiseFreeEmbedding noise_free_embedding(std::span<const Matrix> gram, int d, std::uint64_t seed = 0,
                                        const SvdOptions& options = {});

// mrdpg.json with dimensions plus CSV blocks for phi, phi_t and Lambda_t.
void write_mrdpg(const MrdpgParams& params, const std::filesystem::path& dir);

}  // namespace dynembed
