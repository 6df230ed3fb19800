#include "dynembed/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include "dynembed/rng.hpp"

namespace dynembed {

namespace {

constexpr std::uint64_t kSeedingStream = 0x4b4d5050ULL;

struct Factor {
  Eigen::LLT<Matrix> llt;
  double log_det = 0.0;
};

// Cholesky of each covariance, adding ridges of 1e-6 trace / D until PD.
std::vector<Factor> factorize(std::vector<Matrix>& covs, bool& regularized) {
  std::vector<Factor> out(covs.size());
  for (std::size_t g = 0; g < covs.size(); ++g) {
    Matrix& c = covs[g];
    const auto D = static_cast<double>(c.rows());
    const double ridge = 1e-6 * std::max(c.trace(), 1e-12) / D;
    for (int attempt = 0;; ++attempt) {
      out[g].llt.compute(c);
      if (out[g].llt.info() == Eigen::Success && out[g].llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0) break;
      if (attempt > 30) throw Error("GMM: covariance could not be regularised");
      c.diagonal().array() += ridge * std::pow(10.0, attempt);
      regularized = true;
    }
    out[g].log_det = 2.0 * out[g].llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  }
  return out;
}

// log w_g + log N(x | mu_g, C_g) for every point and component.
Matrix log_densities(const Matrix& x, const Vector& weights, const Matrix& means, const std::vector<Factor>& f) {
  const Eigen::Index N = x.rows();
  const Eigen::Index D = x.cols();
  const auto G = static_cast<Eigen::Index>(f.size());
  Matrix out(N, G);
  const double c0 = -0.5 * static_cast<double>(D) * std::log(2.0 * std::numbers::pi);
  for (Eigen::Index g = 0; g < G; ++g) {
    Matrix centred = (x.rowwise() - means.row(g)).transpose();
    f[static_cast<std::size_t>(g)].llt.matrixL().solveInPlace(centred);
    const Vector maha = centred.colwise().squaredNorm().transpose();
    const double lw = weights(g) > 0.0 ? std::log(weights(g)) : -std::numeric_limits<double>::infinity();
    out.col(g) = (lw + c0 - 0.5 * f[static_cast<std::size_t>(g)].log_det - 0.5 * maha.array()).matrix();
  }
  return out;
}

// Row-wise log-sum-exp; normalises `logp` into responsibilities in place.
double normalize_rows(Matrix& logp) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < logp.rows(); ++i) {
    const double m = logp.row(i).maxCoeff();
    const double lse = m + std::log((logp.row(i).array() - m).exp().sum());
    total += lse;
    logp.row(i) = (logp.row(i).array() - lse).exp();
  }
  return total;
}

// MAP update under the covariance penalty -psi/2 tr(C_g^{-1}): C_g = S_g +
// psi I / n_g. This keeps every covariance PD, so EM never collapses onto a
// point and increases the penalised log-likelihood at every step.
void m_step(const Matrix& x, const Matrix& resp, GmmModel& m, const Matrix& fallback_cov, double psi) {
  const Eigen::Index N = x.rows();
  for (int g = 0; g < m.G; ++g) {
    const double nk = resp.col(g).sum();
    m.weights(g) = nk / static_cast<double>(N);
    if (nk <= 1e-12) {
      m.covariances[static_cast<std::size_t>(g)] = fallback_cov;
      continue;
    }
    m.means.row(g) = (resp.col(g).transpose() * x) / nk;
    const Matrix centred = x.rowwise() - m.means.row(g);
    Matrix c = (centred.transpose() * resp.col(g).asDiagonal() * centred) / nk;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(c, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues()(0) < psi / nk) m.regularized = true;
    c.diagonal().array() += psi / nk;
    m.covariances[static_cast<std::size_t>(g)] = c;
  }
}

double covariance_penalty(const GmmModel& m, double psi) {
  double p = 0.0;
  for (const auto& c : m.covariances) p += c.llt().solve(Matrix::Identity(c.rows(), c.cols())).trace();
  return -0.5 * psi * p;
}

Matrix sample_covariance(const Matrix& x) {
  const Matrix centred = x.rowwise() - x.colwise().mean();
  return centred.transpose() * centred / std::max<double>(1.0, static_cast<double>(x.rows()));
}

GmmModel run_em(const Matrix& x, int G, std::uint64_t seed, const GmmOptions& options) {
  const Eigen::Index N = x.rows();
  const Eigen::Index D = x.cols();
  GmmModel m;
  m.G = G;
  m.weights = Vector::Constant(G, 1.0 / G);
  m.means.resize(G, D);
  const Matrix global_cov = sample_covariance(x);
  m.covariances.assign(static_cast<std::size_t>(G), global_cov);
  const double psi = 1e-6 * std::max(global_cov.trace(), 1e-12) / static_cast<double>(D);

  // k-means++ seeding.
  SplitMix64 rng(hash_key(seed, kSeedingStream));
  std::vector<Eigen::Index> centres{static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(N)))};
  Vector d2 = (x.rowwise() - x.row(centres[0])).rowwise().squaredNorm();
  while (static_cast<int>(centres.size()) < G) {
    const double total = d2.sum();
    Eigen::Index next = 0;
    if (total <= 0.0) {
      next = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(N)));
    } else {
      double u = rng.uniform() * total;
      for (next = 0; next < N - 1; ++next) {
        u -= d2(next);
        if (u < 0.0) break;
      }
    }
    centres.push_back(next);
    d2 = d2.cwiseMin((x.rowwise() - x.row(next)).rowwise().squaredNorm());
  }
  for (int g = 0; g < G; ++g) m.means.row(g) = x.row(centres[static_cast<std::size_t>(g)]);
  Matrix resp = Matrix::Zero(N, G);
  for (Eigen::Index i = 0; i < N; ++i) {
    Eigen::Index best = 0;
    (m.means.rowwise() - x.row(i)).rowwise().squaredNorm().minCoeff(&best);
    resp(i, best) = 1.0;
  }
  m_step(x, resp, m, global_cov, psi);
  for (int g = 0; g < G; ++g) {
    if (resp.col(g).sum() < 2.0) m.covariances[static_cast<std::size_t>(g)] = global_cov;
  }

  double prev = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < options.max_iterations; ++it) {
    const auto f = factorize(m.covariances, m.regularized);
    resp = log_densities(x, m.weights, m.means, f);
    const double ll = normalize_rows(resp) + covariance_penalty(m, psi);
    m.loglik_trace.push_back(ll);
    m.iterations = it + 1;
    if (std::isfinite(prev) && std::abs(ll - prev) < options.tolerance * std::abs(ll)) {
      m.converged = true;
      break;
    }
    prev = ll;
    m_step(x, resp, m, global_cov, psi);
  }
  {
    // Unpenalised log-likelihood of the final parameters, used by BIC.
    const auto f = factorize(m.covariances, m.regularized);
    Matrix lp = log_densities(x, m.weights, m.means, f);
    m.loglik = normalize_rows(lp);
  }
  m.bic = -2.0 * m.loglik + gmm_parameter_count(G, static_cast<int>(D)) * std::log(static_cast<double>(N));
  return m;
}

}  // namespace

int gmm_parameter_count(int G, int D) { return G - 1 + G * D + G * D * (D + 1) / 2; }

GmmModel fit_gmm(const Matrix& points, int G, const GmmOptions& options) {
  if (G < 1) throw InvalidArgument("fit_gmm: G must be positive");
  if (points.rows() <= static_cast<Eigen::Index>(G) * points.cols()) {
    throw InvalidArgument("fit_gmm: need more than G * D points");
  }
  if (!points.allFinite()) throw InvalidArgument("fit_gmm: non-finite point");
  GmmModel best;
  bool have = false;
  for (int r = 0; r < std::max(options.restarts, 1); ++r) {
    GmmModel m = run_em(points, G, hash_key(options.seed, static_cast<std::uint64_t>(G), static_cast<std::uint64_t>(r)), options);
    if (!have || m.loglik > best.loglik) {
      best = std::move(m);
      have = true;
    }
  }
  return best;
}

GmmSelection fit_gmm_bic(const Matrix& points, const GmmOptions& options) {
  if (options.grid.empty()) throw InvalidArgument("fit_gmm_bic: empty grid");
  const int gmax = *std::max_element(options.grid.begin(), options.grid.end());
  if (points.rows() <= static_cast<Eigen::Index>(gmax) * points.cols()) {
    throw InvalidArgument("fit_gmm_bic: need N > max(G) * D points (N = " + std::to_string(points.rows()) + ")");
  }
  GmmSelection sel;
  bool have = false;
  for (int G : options.grid) {
    GmmModel m = fit_gmm(points, G, options);
    sel.bic_table.emplace_back(G, m.bic);
    if (m.regularized) sel.warnings.push_back("G = " + std::to_string(G) + ": singular covariance regularised");
    if (!m.converged) sel.warnings.push_back("G = " + std::to_string(G) + ": EM stopped at the iteration limit");
    if (!have || m.bic < sel.best.bic || (m.bic == sel.best.bic && G < sel.best.G)) {
      sel.best = std::move(m);
      have = true;
    }
  }
  return sel;
}

double gmm_loglik(const GmmModel& model, const Matrix& points) {
  auto covs = model.covariances;
  bool reg = false;
  const auto f = factorize(covs, reg);
  Matrix lp = log_densities(points, model.weights, model.means, f);
  return normalize_rows(lp);
}

ClusterAssignment assign(const GmmModel& model, const Matrix& points) {
  if (points.cols() != model.dim()) throw InvalidArgument("assign: dimension mismatch");
  auto covs = model.covariances;
  bool reg = false;
  const auto f = factorize(covs, reg);
  ClusterAssignment out;
  out.responsibilities = log_densities(points, model.weights, model.means, f);
  normalize_rows(out.responsibilities);
  out.labels.resize(static_cast<std::size_t>(points.rows()));
  out.max_posterior.resize(points.rows());
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    int best = 0;
    for (int g = 1; g < model.G; ++g) {
      if (out.responsibilities(i, g) > out.responsibilities(i, best)) best = g;
    }
    out.labels[static_cast<std::size_t>(i)] = best;
    out.max_posterior(i) = out.responsibilities(i, best);
  }
  return out;
}

namespace {

template <typename Transform>
PooledPoints pool(const Embedding& emb, Eigen::Index width, Transform&& transform) {
  PooledPoints out;
  std::vector<std::pair<Matrix, std::vector<bool>>> per_time;
  Eigen::Index total = 0;
  for (int t = 0; t < emb.num_times(); ++t) {
    per_time.push_back(transform(t));
    total += std::count(per_time.back().second.begin(), per_time.back().second.end(), true);
  }
  out.points.resize(total, width);
  Eigen::Index row = 0;
  for (int t = 0; t < emb.num_times(); ++t) {
    const auto& [m, active] = per_time[static_cast<std::size_t>(t)];
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if (!active[static_cast<std::size_t>(i)]) continue;
      out.points.row(row++) = m.row(i);
      out.index.emplace_back(static_cast<int>(i), t);
    }
  }
  return out;
}

}  // namespace

PooledPoints pool_spherical(const Embedding& emb, AngleRange range) {
  const int width = emb.max_dim();
  if (width < 2) throw InvalidArgument("pool_spherical: embedding dimension must be at least 2");
  return pool(emb, width - 1, [&](int t) {
    SphericalCoordinates sc = spherical_coordinates(emb.padded(t, width), range);
    return std::pair{std::move(sc.angles), std::move(sc.active)};
  });
}

PooledPoints pool_raw(const Embedding& emb) {
  const int width = emb.max_dim();
  return pool(emb, width, [&](int t) {
    Matrix y = emb.padded(t, width);
    std::vector<bool> active(static_cast<std::size_t>(y.rows()));
    for (Eigen::Index i = 0; i < y.rows(); ++i) active[static_cast<std::size_t>(i)] = y.row(i).squaredNorm() > 0.0;
    return std::pair{std::move(y), std::move(active)};
  });
}

std::vector<ProportionRow> proportion_table(const ClusterAssignment& assignment, const PooledPoints& pooled, int T,
                                            int G, const std::vector<std::string>& node_class) {
  if (assignment.labels.size() != pooled.index.size()) throw InvalidArgument("proportion_table: size mismatch");
  std::map<std::string, std::vector<std::vector<int>>> counts;
  for (std::size_t r = 0; r < pooled.index.size(); ++r) {
    const auto [node, t] = pooled.index[r];
    const std::string cls = node_class.empty() ? std::string("all") : node_class.at(static_cast<std::size_t>(node));
    auto& table = counts[cls];
    if (table.empty()) table.assign(static_cast<std::size_t>(T), std::vector<int>(static_cast<std::size_t>(G), 0));
    ++table[static_cast<std::size_t>(t)][static_cast<std::size_t>(assignment.labels[r])];
  }
  std::vector<ProportionRow> rows;
  for (const auto& [cls, table] : counts) {
    for (int t = 0; t < T; ++t) {
      const auto& c = table[static_cast<std::size_t>(t)];
      int total = 0;
      for (int x : c) total += x;
      for (int g = 0; g < G; ++g) {
        rows.push_back({cls, t, g, c[static_cast<std::size_t>(g)],
                        total > 0 ? static_cast<double>(c[static_cast<std::size_t>(g)]) / total : 0.0});
      }
    }
  }
  return rows;
}

}  // namespace dynembed
