#include "dynembed/embedders.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dynembed {

namespace {

int count_negative(const TruncatedSvd& svd) {
  int neg = 0;
  for (Eigen::Index j = 0; j < svd.U.cols(); ++j) {
    if (svd.S(j) > 0.0 && svd.U.col(j).dot(svd.V.col(j)) < 0.0) ++neg;
  }
  return neg;
}

void copy_labels(Embedding& e, const GraphSeries& g) {
  e.node_labels = g.node_labels();
  e.time_labels = g.time_labels();
}

void check_dim(int d, Eigen::Index limit, const char* what) {
  if (d < 1 || d > limit) {
    throw InvalidArgument(std::string(what) + ": dimension " + std::to_string(d) + " outside [1, " +
                          std::to_string(limit) + "]");
  }
}

Embedding split_right(EmbedMethod method, const TruncatedSvd& svd, Eigen::Index n, Eigen::Index T, int d) {
  Embedding e;
  e.method = method;
  const Vector root = svd.S.cwiseSqrt();
  const Matrix y = svd.V * root.asDiagonal();
  for (Eigen::Index t = 0; t < T; ++t) e.Y.push_back(y.middleRows(t * n, n));
  e.X = svd.U * root.asDiagonal();
  e.dims.assign(static_cast<std::size_t>(T), d);
  e.singular_values.push_back(svd.S);
  return e;
}

}  // namespace

std::string to_string(EmbedMethod m) {
  switch (m) {
    case EmbedMethod::Uase: return "uase";
    case EmbedMethod::Omnibus: return "omnibus";
    case EmbedMethod::Independent: return "independent";
    case EmbedMethod::Separate: return "separate";
  }
  return "uase";
}

EmbedMethod parse_method(const std::string& name) {
  if (name == "uase") return EmbedMethod::Uase;
  if (name == "omnibus") return EmbedMethod::Omnibus;
  if (name == "independent") return EmbedMethod::Independent;
  if (name == "separate") return EmbedMethod::Separate;
  throw InvalidArgument("unknown embedding method '" + name + "' (uase, omnibus, independent, separate)");
}

int Embedding::max_dim() const noexcept {
  int m = 0;
  for (const auto& y : Y) m = std::max(m, static_cast<int>(y.cols()));
  return m;
}

Matrix Embedding::padded(int t, int width) const {
  const Matrix& y = Y.at(static_cast<std::size_t>(t));
  if (width < y.cols()) throw InvalidArgument("Embedding::padded: width below embedding dimension");
  Matrix out = Matrix::Zero(y.rows(), width);
  out.leftCols(y.cols()) = y;
  return out;
}

namespace {

// Right singular vectors of non-zero singular values lie in the row space, so
// a zero column embeds to exactly zero; round-off is removed here.
template <typename M>
std::vector<bool> zero_columns(const M& a) {
  const Vector norms = Matrix(a.cwiseAbs().transpose() * Vector::Ones(a.rows())).col(0);
  std::vector<bool> out(static_cast<std::size_t>(a.cols()));
  for (Eigen::Index j = 0; j < a.cols(); ++j) out[static_cast<std::size_t>(j)] = norms(j) == 0.0;
  return out;
}

void clear_rows(Matrix& y, const std::vector<bool>& zero) {
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    if (zero[static_cast<std::size_t>(i)]) y.row(i).setZero();
  }
}

}  // namespace

Embedding uase(const GraphSeries& g, int d, std::uint64_t seed, const SvdOptions& options) {
  const Eigen::Index n = g.num_nodes();
  const Eigen::Index T = g.num_times();
  check_dim(d, std::min(n, n * T), "uase");
  const TruncatedSvd svd = truncated_svd(unfold(g), d, seed, options);
  Embedding e = split_right(EmbedMethod::Uase, svd, n, T, d);
  for (Eigen::Index t = 0; t < T; ++t) clear_rows(e.Y[static_cast<std::size_t>(t)], zero_columns(g.adjacency(static_cast<int>(t))));
  copy_labels(e, g);
  return e;
}

Embedding uase(std::span<const Matrix> blocks, int d, std::uint64_t seed, const SvdOptions& options) {
  if (blocks.empty()) throw InvalidArgument("uase: no snapshots");
  const Eigen::Index n = blocks.front().rows();
  const auto T = static_cast<Eigen::Index>(blocks.size());
  check_dim(d, std::min(n, n * T), "uase");
  Matrix a(n, n * T);
  for (Eigen::Index t = 0; t < T; ++t) {
    const Matrix& b = blocks[static_cast<std::size_t>(t)];
    if (b.rows() != n || b.cols() != n) throw InvalidArgument("uase: snapshots must be n x n");
    a.middleCols(t * n, n) = b;
  }
  Embedding e = split_right(EmbedMethod::Uase, truncated_svd(a, d, seed, options), n, T, d);
  for (Eigen::Index t = 0; t < T; ++t) clear_rows(e.Y[static_cast<std::size_t>(t)], zero_columns(blocks[static_cast<std::size_t>(t)]));
  return e;
}

Matrix omnibus_matrix(const GraphSeries& g) {
  const Eigen::Index n = g.num_nodes();
  const Eigen::Index T = g.num_times();
  Matrix om(n * T, n * T);
  std::vector<Matrix> dense;
  dense.reserve(static_cast<std::size_t>(T));
  for (const auto& a : g.snapshots()) dense.emplace_back(a);
  for (Eigen::Index s = 0; s < T; ++s) {
    for (Eigen::Index t = 0; t < T; ++t) {
      om.block(s * n, t * n, n, n) = 0.5 * (dense[static_cast<std::size_t>(s)] + dense[static_cast<std::size_t>(t)]);
    }
  }
  return om;
}

Embedding omnibus(const GraphSeries& g, int d, std::uint64_t seed, const OmnibusOptions& options) {
  const Eigen::Index n = g.num_nodes();
  const Eigen::Index T = g.num_times();
  const Eigen::Index N = n * T;
  check_dim(d, N, "omnibus");
  const double bytes = 8.0 * static_cast<double>(N) * static_cast<double>(N);
  TruncatedSvd svd;
  if (bytes <= static_cast<double>(options.memory_budget)) {
    svd = truncated_svd(omnibus_matrix(g), d, seed, options.svd);
  } else if (options.allow_matrix_free) {
    // Block row s of the product is (A_s sum_t X_t + sum_t A_t X_t) / 2.
    const auto& snaps = g.snapshots();
    auto apply = [&snaps, n, T](const Matrix& x) -> Matrix {
      Matrix sum_x = Matrix::Zero(n, x.cols());
      Matrix sum_ax = Matrix::Zero(n, x.cols());
      for (Eigen::Index t = 0; t < T; ++t) {
        sum_x += x.middleRows(t * n, n);
        sum_ax += snaps[static_cast<std::size_t>(t)] * x.middleRows(t * n, n);
      }
      Matrix out(n * T, x.cols());
      for (Eigen::Index s = 0; s < T; ++s) out.middleRows(s * n, n) = 0.5 * (snaps[static_cast<std::size_t>(s)] * sum_x + sum_ax);
      return out;
    };
    svd = truncated_svd(LinearOperator{N, N, apply, apply}, d, seed, options.svd);
  } else {
    throw MemoryBudgetError("omnibus matrix needs " + std::to_string(static_cast<std::uint64_t>(bytes)) +
                            " bytes, over the memory budget of " + std::to_string(options.memory_budget) +
                            " bytes; raise DYNEMBED_MEMORY_BUDGET or use --matrix-free");
  }
  Embedding e;
  e.method = EmbedMethod::Omnibus;
  const Matrix y = svd.U * svd.S.cwiseSqrt().asDiagonal();
  // An omnibus row is zero only when the node is isolated at every time.
  std::vector<bool> isolated(static_cast<std::size_t>(n), true);
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto z = zero_columns(g.adjacency(static_cast<int>(t)));
    for (std::size_t i = 0; i < z.size(); ++i) isolated[i] = isolated[i] && z[i];
  }
  for (Eigen::Index t = 0; t < T; ++t) {
    e.Y.push_back(y.middleRows(t * n, n));
    clear_rows(e.Y.back(), isolated);
  }
  e.dims.assign(static_cast<std::size_t>(T), d);
  e.singular_values.push_back(svd.S);
  e.negative_eigenvalues.push_back(count_negative(svd));
  if (e.negative_eigenvalues.back() > 0) {
    e.warnings.push_back("omnibus spectrum is indefinite: " + std::to_string(e.negative_eigenvalues.back()) +
                         " of the retained eigenvalues are negative");
  }
  copy_labels(e, g);
  return e;
}

namespace {

Embedding per_time(EmbedMethod method, const GraphSeries& g, const std::vector<SparseMatrix>& mats,
                   std::span<const int> dims, std::uint64_t seed, const SvdOptions& options) {
  if (static_cast<int>(dims.size()) != g.num_times()) throw InvalidArgument("one dimension per time step required");
  Embedding e;
  e.method = method;
  for (std::size_t t = 0; t < mats.size(); ++t) {
    check_dim(dims[t], g.num_nodes(), "per-time embedding");
    const TruncatedSvd svd = truncated_svd(mats[t], dims[t], seed, options);
    e.Y.push_back(svd.V * svd.S.cwiseSqrt().asDiagonal());
    clear_rows(e.Y.back(), zero_columns(mats[t]));
    e.dims.push_back(dims[t]);
    e.singular_values.push_back(svd.S);
    e.negative_eigenvalues.push_back(count_negative(svd));
  }
  copy_labels(e, g);
  return e;
}

}  // namespace

Embedding independent_ase(const GraphSeries& g, std::span<const int> dims, std::uint64_t seed,
                          const SvdOptions& options) {
  return per_time(EmbedMethod::Independent, g, g.snapshots(), dims, seed, options);
}

TemporalWeights TemporalWeights::constant(int window) {
  TemporalWeights w;
  w.kind = Kind::Constant;
  w.window = window;
  return w;
}

TemporalWeights TemporalWeights::exponential(double lambda, int window) {
  if (!(lambda >= 0.0 && lambda < 1.0)) throw InvalidArgument("exponential forgetting factor must lie in [0, 1)");
  TemporalWeights w;
  w.kind = Kind::Exponential;
  w.lambda = lambda;
  w.window = window;
  return w;
}

TemporalWeights TemporalWeights::sliding(int window) {
  if (window < 1) throw InvalidArgument("sliding window must be at least 1");
  TemporalWeights w;
  w.kind = Kind::Sliding;
  w.window = window;
  return w;
}

TemporalWeights TemporalWeights::from_values(std::vector<double> values) {
  TemporalWeights w;
  w.kind = Kind::Custom;
  w.custom = std::move(values);
  return w;
}

std::vector<double> TemporalWeights::values(int T) const {
  std::vector<double> w;
  if (kind == Kind::Custom) {
    w = custom;
  } else {
    const int len = window > 0 ? window : T;
    for (int k = 0; k < len; ++k) {
      w.push_back(kind == Kind::Exponential ? std::pow(1.0 - lambda, k) : 1.0 / len);
    }
  }
  if (w.empty()) throw InvalidArgument("temporal weights are empty");
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw InvalidArgument("temporal weights must be finite and non-negative");
  }
  if (std::accumulate(w.begin(), w.end(), 0.0) <= 0.0) throw InvalidArgument("temporal weights are all zero");
  return w;
}

SparseMatrix temporal_average(const GraphSeries& g, int t, const TemporalWeights& weights) {
  if (t < 0 || t >= g.num_times()) throw InvalidArgument("temporal_average: time out of range");
  const auto w = weights.values(g.num_times());
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  double available = 0.0;
  SparseMatrix acc(g.num_nodes(), g.num_nodes());
  for (int k = 0; k < static_cast<int>(w.size()) && k <= t; ++k) {
    if (w[static_cast<std::size_t>(k)] == 0.0) continue;
    acc += w[static_cast<std::size_t>(k)] * g.adjacency(t - k);
    available += w[static_cast<std::size_t>(k)];
  }
  if (available <= 0.0) {
    throw InvalidArgument("temporal_average: no weight on the available history at time " + std::to_string(t + 1));
  }
  acc *= total / available;
  acc.prune(0.0);
  return acc;
}

Embedding separate_embed(const GraphSeries& g, const TemporalWeights& weights, int d, std::uint64_t seed,
                         const SvdOptions& options) {
  std::vector<SparseMatrix> avg;
  for (int t = 0; t < g.num_times(); ++t) avg.push_back(temporal_average(g, t, weights));
  const std::vector<int> dims(static_cast<std::size_t>(g.num_times()), d);
  return per_time(EmbedMethod::Separate, g, avg, dims, seed, options);
}

DimensionSelection profile_likelihood(const Vector& sv) {
  const Eigen::Index p = sv.size();
  if (p < 2) throw InvalidArgument("profile_likelihood: need at least 2 singular values");
  DimensionSelection out;
  out.singular_values = sv;
  out.profile.resize(p - 1);
  constexpr double kTwoPi = 6.283185307179586;
  double best = -std::numeric_limits<double>::infinity();
  for (Eigen::Index q = 1; q < p; ++q) {
    const auto head = sv.head(q).array();
    const auto tail = sv.tail(p - q).array();
    const double ss = (head - head.mean()).square().sum() + (tail - tail.mean()).square().sum();
    const double var = std::max(ss / static_cast<double>(p), 1e-300);
    const double ll = -0.5 * static_cast<double>(p) * std::log(kTwoPi * var) - 0.5 * static_cast<double>(p);
    out.profile(q - 1) = ll;
    if (ll > best) {
      best = ll;
      out.d_hat = static_cast<int>(q);
    }
  }
  return out;
}

namespace {

template <typename M>
DimensionSelection select_impl(const M& m, int max_d, std::uint64_t seed, const SvdOptions& options) {
  const int limit = static_cast<int>(std::min(m.rows(), m.cols()));
  if (max_d <= 0) max_d = std::min(limit, 100);
  if (max_d < 2) throw InvalidArgument("select_dimension: max_d must be at least 2");
  if (max_d > limit) throw InvalidArgument("select_dimension: max_d exceeds min(rows, cols)");
  return profile_likelihood(truncated_svd(m, max_d, seed, options).S);
}

}  // namespace

DimensionSelection select_dimension(const SparseMatrix& m, int max_d, std::uint64_t seed, const SvdOptions& options) {
  return select_impl(m, max_d, seed, options);
}

DimensionSelection select_dimension(const Matrix& m, int max_d, std::uint64_t seed, const SvdOptions& options) {
  return select_impl(m, max_d, seed, options);
}

}  // namespace dynembed
