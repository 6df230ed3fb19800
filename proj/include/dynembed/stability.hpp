#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dynembed/common.hpp"
#include "dynembed/embedders.hpp"
#include "dynembed/models.hpp"
#include "dynembed/mrdpg.hpp"

namespace dynembed {

// Ground truth for an embedded series: the finite kernel and each node's
// support sequence.
struct StabilityTruth {
  FiniteKernel kernel;
  std::vector<int> node_support;
};

StabilityTruth stability_truth(const DsbmSpec& spec, const LatentSeries& z);

// A space-time group: nodes whose latent atom at time t is `atom`.
struct GroupRef {
  int atom = 0;
  int t = 0;
  friend bool operator==(const GroupRef&, const GroupRef&) = default;
};

using GroupPair = std::pair<GroupRef, GroupRef>;

// Every unordered pair of distinct groups that are exchangeable (or, when
// asked, exchangeable up to degree) on the support.
std::vector<GroupPair> exchangeable_pairs(const FiniteKernel& kernel, bool include_up_to_degree = true,
                                          double tol = 1e-9);

struct PairResult {
  GroupRef a;
  GroupRef b;
  Exchangeability kind = Exchangeability::Neither;
  double alpha = 1.0;
  int size_a = 0;
  int size_b = 0;
  double centroid_gap = 0.0;  // ||c_a - alpha c_b||
  double separation = 0.0;    // nearest non-exchangeable centroid at the same time
  double gap_ratio = 0.0;
  double cov_gap = 0.0;       // relative Frobenius distance of C_a and alpha C_b
  bool cov_skipped = false;
  bool has_verdict = false;
  bool pass = false;
  std::string note;
};

struct StabilityReport {
  double threshold = 0.1;
  std::vector<PairResult> pairs;

  bool all_pass() const;
};

struct StabilityOptions {
  double threshold = 0.1;
  double tol = 1e-9;
  // Empty: every exchangeable pair of the kernel.
  std::vector<GroupPair> pairs;
};

// Embeddings with different per-time dimensions are compared after
// zero-padding to the widest one.
StabilityReport stability_report(const Embedding& emb, const StabilityTruth& truth,
                                 const StabilityOptions& options = {});

std::string format_report(const StabilityReport& report);
void write_report_csv(const StabilityReport& report, const std::filesystem::path& path);

// ||a - b||_F / ((||a||_F + ||b||_F) / 2).
double relative_frobenius(const Matrix& a, const Matrix& b);

struct ConsistencyOptions {
  std::vector<int> sizes{250, 500, 1000, 2000};
  int reps = 10;
  std::uint64_t seed = 0;
  int d = 0;                // 0: rank of the kernel construction
  bool noise_free = false;  // embed P itself instead of a sample
  SvdOptions svd;
};

struct ConsistencyPoint {
  int n = 0;
  std::vector<double> max_error;       // per replicate
  std::vector<double> relative_error;  // max_error / max_i ||Ytilde_i||
  double median_error = 0.0;
  double median_relative = 0.0;
};

// Maximum row error of UASE after the one-mode Procrustes alignment of
// (U_A; V_A) onto (U_P; V_P).
std::vector<ConsistencyPoint> consistency_curve(const DsbmSpec& spec, const ConsistencyOptions& options);

struct CltOptions {
  int n = 2000;
  int reps = 20;
  std::uint64_t seed = 0;
  GroupRef target{0, 0};
  // Empty: every group exchangeable with the target.
  std::vector<GroupRef> partners;
  bool find_partners = true;
  Regime regime = Regime::Exact;
  SvdOptions svd;
};

struct CltPartner {
  GroupRef group;
  int pooled = 0;
  Matrix covariance;
  double gap = 0.0;  // relative_frobenius against the target covariance
};

struct CltResult {
  int pooled = 0;
  Matrix empirical_covariance;
  Matrix theory_covariance;
  double theory_gap_frame = 0.0;    // ||C - C_th||_F / ||C_th||_F in the explicit W frame
  double theory_gap_aligned = 0.0;  // same after the best orthogonal alignment
  Vector mean;
  double mean_bound = 0.0;
  bool mean_ok = false;
  Vector skewness;
  Vector excess_kurtosis;
  std::vector<CltPartner> partners;
  bool regime_mismatch = false;
};

// Pools sqrt(n) (Yhat_i Wtilde - Ytilde_i) W over nodes in the target group
// and replicates.
CltResult clt_check(const DsbmSpec& spec, const CltOptions& options);

}  // namespace dynembed
