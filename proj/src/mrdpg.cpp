#include "dynembed/mrdpg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

namespace dynembed {

namespace {

// Orthonormal rows spanning the row space of m.
Matrix row_basis(const Matrix& m, double rel_tol) {
  if (m.rows() == 0 || m.cols() == 0) return Matrix(0, m.cols());
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return Matrix(0, m.cols());
  const auto r = static_cast<Eigen::Index>((s.array() > rel_tol * s(0)).count());
  return svd.matrixV().leftCols(r).transpose();
}

std::vector<std::vector<bool>> used_atoms(const FiniteKernel& k) {
  std::vector<std::vector<bool>> used;
  for (int t = 0; t < k.num_times(); ++t) used.emplace_back(static_cast<std::size_t>(k.num_atoms(t)), false);
  for (std::size_t s = 0; s < k.support.size(); ++s) {
    if (k.probabilities[s] <= 0.0) continue;
    for (int t = 0; t < k.num_times(); ++t) used[static_cast<std::size_t>(t)][static_cast<std::size_t>(k.support[s][static_cast<std::size_t>(t)])] = true;
  }
  return used;
}

}  // namespace

void FiniteKernel::validate() const {
  if (values.empty()) throw InvalidArgument("finite kernel: no time steps");
  for (const auto& v : values) {
    if (v.rows() != v.cols() || v.rows() == 0) throw InvalidArgument("finite kernel: values must be square");
    if ((v - v.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, v.cwiseAbs().maxCoeff())) {
      throw InvalidArgument("finite kernel: values must be symmetric");
    }
  }
  if (support.empty() || support.size() != probabilities.size()) {
    throw InvalidArgument("finite kernel: one probability per support sequence required");
  }
  double total = 0.0;
  for (std::size_t s = 0; s < support.size(); ++s) {
    if (static_cast<int>(support[s].size()) != num_times()) throw InvalidArgument("finite kernel: sequence length != T");
    for (int t = 0; t < num_times(); ++t) {
      const int a = support[s][static_cast<std::size_t>(t)];
      if (a < 0 || a >= num_atoms(t)) throw InvalidArgument("finite kernel: atom index out of range");
    }
    if (probabilities[s] < 0.0) throw InvalidArgument("finite kernel: negative probability");
    total += probabilities[s];
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("finite kernel: probabilities must sum to 1");
  if (!(rho > 0.0 && rho <= 1.0)) throw InvalidArgument("finite kernel: rho must lie in (0, 1]");
}

FiniteKernel finite_kernel(const DsbmSpec& spec) {
  spec.validate();
  if (spec.degree != DegreeModel::None) {
    throw InvalidArgument("finite_kernel: degree-corrected specs need a latent series");
  }
  FiniteKernel k;
  k.values = spec.B;
  k.support = spec.sequences;
  k.probabilities = spec.probabilities;
  k.rho = spec.rho;
  return k;
}

EmpiricalKernel finite_kernel(const DsbmSpec& spec, const LatentSeries& z) {
  spec.validate();
  const int n = z.num_nodes();
  if (n == 0 || z.num_times() != spec.T) throw InvalidArgument("finite_kernel: latent series does not match spec");
  EmpiricalKernel out;
  FiniteKernel& k = out.kernel;
  k.rho = spec.rho;
  std::vector<std::map<std::pair<int, double>, int>> atoms(static_cast<std::size_t>(spec.T));
  std::vector<std::vector<std::pair<int, double>>> atom_list(static_cast<std::size_t>(spec.T));
  std::map<std::vector<int>, int> seq_index;
  std::vector<int> counts;
  out.node_support.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::vector<int> seq(static_cast<std::size_t>(spec.T));
    for (int t = 0; t < spec.T; ++t) {
      const std::pair<int, double> key{z.community(i, t), z.weight(i)};
      auto& table = atoms[static_cast<std::size_t>(t)];
      auto [it, inserted] = table.emplace(key, static_cast<int>(table.size()));
      if (inserted) atom_list[static_cast<std::size_t>(t)].push_back(key);
      seq[static_cast<std::size_t>(t)] = it->second;
    }
    auto [it, inserted] = seq_index.emplace(seq, static_cast<int>(k.support.size()));
    if (inserted) {
      k.support.push_back(seq);
      counts.push_back(0);
    }
    ++counts[static_cast<std::size_t>(it->second)];
    out.node_support[static_cast<std::size_t>(i)] = it->second;
  }
  for (int c : counts) k.probabilities.push_back(static_cast<double>(c) / n);
  for (int t = 0; t < spec.T; ++t) {
    const auto& list = atom_list[static_cast<std::size_t>(t)];
    const auto m = static_cast<Eigen::Index>(list.size());
    Matrix v(m, m);
    for (Eigen::Index a = 0; a < m; ++a) {
      for (Eigen::Index b = 0; b < m; ++b) {
        const auto& [ca, wa] = list[static_cast<std::size_t>(a)];
        const auto& [cb, wb] = list[static_cast<std::size_t>(b)];
        v(a, b) = wa * wb * spec.B[static_cast<std::size_t>(t)](ca, cb);
      }
    }
    k.values.push_back(std::move(v));
  }
  return out;
}

Matrix MrdpgParams::lambda_concat() const {
  const int total = std::accumulate(dt.begin(), dt.end(), 0);
  Matrix out(d, total);
  Eigen::Index col = 0;
  for (const auto& l : Lambda) {
    out.middleCols(col, l.cols()) = l;
    col += l.cols();
  }
  return out;
}

MrdpgParams construct_mrdpg(const FiniteKernel& kernel, double rel_tol) {
  kernel.validate();
  const int T = kernel.num_times();
  MrdpgParams out;
  out.kernel = kernel;

  // Stacked kernel over all (t, atom): block diagonal, cross-time entries are
  // never evaluated.
  std::vector<Eigen::Index> offset(static_cast<std::size_t>(T) + 1, 0);
  for (int t = 0; t < T; ++t) offset[static_cast<std::size_t>(t) + 1] = offset[static_cast<std::size_t>(t)] + kernel.num_atoms(t);
  const Eigen::Index total_atoms = offset.back();
  Matrix stacked = Matrix::Zero(total_atoms, total_atoms);
  for (int t = 0; t < T; ++t) {
    stacked.block(offset[static_cast<std::size_t>(t)], offset[static_cast<std::size_t>(t)], kernel.num_atoms(t), kernel.num_atoms(t)) =
        kernel.values[static_cast<std::size_t>(t)];
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(stacked);
  const Vector& lambda = es.eigenvalues();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(total_atoms));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (std::abs(lambda(a)) != std::abs(lambda(b))) return std::abs(lambda(a)) > std::abs(lambda(b));
    return lambda(a) > lambda(b);
  });
  const double lmax = total_atoms > 0 ? std::abs(lambda(order.front())) : 0.0;
  if (lmax == 0.0) throw InvalidArgument("construct_mrdpg: kernel is identically zero");
  std::vector<Eigen::Index> kept;
  for (Eigen::Index idx : order) {
    if (std::abs(lambda(idx)) > rel_tol * lmax) kept.push_back(idx);
  }
  const auto D = static_cast<Eigen::Index>(kept.size());
  out.phi_hat.resize(total_atoms, D);
  out.signature.resize(D);
  for (Eigen::Index c = 0; c < D; ++c) {
    const double l = lambda(kept[static_cast<std::size_t>(c)]);
    out.phi_hat.col(c) = es.eigenvectors().col(kept[static_cast<std::size_t>(c)]) * std::sqrt(std::abs(l));
    out.signature(c) = l > 0.0 ? 1.0 : -1.0;
    (l > 0.0 ? out.p : out.q) += 1;
  }
  auto phi_hat_at = [&](int t, int a) { return out.phi_hat.row(offset[static_cast<std::size_t>(t)] + a); };

  // xi(s) = (phi_hat(s_1@1) | ... | phi_hat(s_T@T)) for the support sequences.
  std::vector<std::size_t> live;
  for (std::size_t s = 0; s < kernel.support.size(); ++s) {
    if (kernel.probabilities[s] > 0.0) live.push_back(s);
  }
  Matrix xi(static_cast<Eigen::Index>(kernel.support.size()), D * T);
  for (std::size_t s = 0; s < kernel.support.size(); ++s) {
    for (int t = 0; t < T; ++t) xi.block(static_cast<Eigen::Index>(s), t * D, 1, D) = phi_hat_at(t, kernel.support[s][static_cast<std::size_t>(t)]);
  }
  Matrix xi_live(static_cast<Eigen::Index>(live.size()), D * T);
  for (std::size_t r = 0; r < live.size(); ++r) xi_live.row(static_cast<Eigen::Index>(r)) = xi.row(static_cast<Eigen::Index>(live[r]));
  out.M = row_basis(xi_live, rel_tol);

  const auto used = used_atoms(kernel);
  Eigen::Index n_rows = 0;
  for (int t = 0; t < T; ++t) {
    std::vector<Eigen::Index> rows;
    for (int a = 0; a < kernel.num_atoms(t); ++a) {
      if (used[static_cast<std::size_t>(t)][static_cast<std::size_t>(a)]) rows.push_back(offset[static_cast<std::size_t>(t)] + a);
    }
    Matrix phi_t(static_cast<Eigen::Index>(rows.size()), D);
    for (std::size_t r = 0; r < rows.size(); ++r) phi_t.row(static_cast<Eigen::Index>(r)) = out.phi_hat.row(rows[r]);
    out.N.push_back(row_basis(phi_t, rel_tol));
    n_rows += out.N.back().rows();
  }

  // Pi = M D N^T with D = diag(I_pq, ..., I_pq) and N = diag(N_1, ..., N_T).
  Matrix ndt = Matrix::Zero(D * T, n_rows);
  Eigen::Index col = 0;
  for (int t = 0; t < T; ++t) {
    const Matrix& nt = out.N[static_cast<std::size_t>(t)];
    ndt.block(t * D, col, D, nt.rows()) = out.signature.asDiagonal() * nt.transpose();
    col += nt.rows();
  }
  out.Pi = out.M * ndt;
  Eigen::JacobiSVD<Matrix> pi_svd(out.Pi, Eigen::ComputeFullU | Eigen::ComputeFullV);
  out.Pi_singular_values = pi_svd.singularValues();
  const double smax = out.Pi_singular_values.size() ? out.Pi_singular_values(0) : 0.0;
  out.d = smax > 0.0 ? static_cast<int>((out.Pi_singular_values.array() > rel_tol * smax).count()) : 0;
  if (out.d == 0) throw InvalidArgument("construct_mrdpg: kernel has rank zero on the support");
  const Matrix U = pi_svd.matrixU().leftCols(out.d);
  const Vector S = out.Pi_singular_values.head(out.d);
  const Matrix V = pi_svd.matrixV().leftCols(out.d);

  out.X_points = xi * out.M.transpose() * U;
  col = 0;
  for (int t = 0; t < T; ++t) {
    const Matrix& nt = out.N[static_cast<std::size_t>(t)];
    const Matrix vt = V.middleRows(col, nt.rows());
    col += nt.rows();
    Eigen::JacobiSVD<Matrix> vsvd(vt, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vector& st = vsvd.singularValues();
    const int dt = (st.size() && st(0) > 0.0) ? static_cast<int>((st.array() > rel_tol * st(0)).count()) : 0;
    out.dt.push_back(dt);
    const Matrix Ut = vsvd.matrixU().leftCols(dt);
    const Matrix Wt = vsvd.matrixV().leftCols(dt);
    out.Lambda.push_back(S.asDiagonal() * Wt * st.head(dt).asDiagonal());
    const Matrix phi_block = out.phi_hat.middleRows(offset[static_cast<std::size_t>(t)], kernel.num_atoms(t));
    out.Y_points.push_back(phi_block * nt.transpose() * Ut);
  }

  double err = 0.0;
  for (std::size_t s : live) {
    for (int t = 0; t < T; ++t) {
      const int a = kernel.support[s][static_cast<std::size_t>(t)];
      for (int b = 0; b < kernel.num_atoms(t); ++b) {
        if (!used[static_cast<std::size_t>(t)][static_cast<std::size_t>(b)]) continue;
        const double rec = (out.X_points.row(static_cast<Eigen::Index>(s)) * out.Lambda[static_cast<std::size_t>(t)] *
                            out.Y_points[static_cast<std::size_t>(t)].row(b).transpose())(0, 0);
        err = std::max(err, std::abs(rec - kernel.values[static_cast<std::size_t>(t)](a, b)));
      }
    }
  }
  out.reconstruction_error = err;
  return out;
}

Matrix left_positions(const MrdpgParams& params, std::span<const int> node_support) {
  Matrix x(static_cast<Eigen::Index>(node_support.size()), params.d);
  const double scale = std::sqrt(params.kernel.rho);
  for (std::size_t i = 0; i < node_support.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = scale * params.X_points.row(node_support[i]);
  }
  return x;
}

Matrix right_positions(const MrdpgParams& params, std::span<const int> node_support, int t) {
  const Matrix& yp = params.Y_points.at(static_cast<std::size_t>(t));
  Matrix y(static_cast<Eigen::Index>(node_support.size()), yp.cols());
  const double scale = std::sqrt(params.kernel.rho);
  for (std::size_t i = 0; i < node_support.size(); ++i) {
    const int atom = params.kernel.support.at(static_cast<std::size_t>(node_support[i]))[static_cast<std::size_t>(t)];
    y.row(static_cast<Eigen::Index>(i)) = scale * yp.row(atom);
  }
  return y;
}

MomentMatrices compute_moments(const MrdpgParams& params) {
  const FiniteKernel& k = params.kernel;
  const int T = k.num_times();
  MomentMatrices m;
  m.Delta_X = Matrix::Zero(params.d, params.d);
  for (int t = 0; t < T; ++t) m.Delta_Y_blocks.push_back(Matrix::Zero(params.dt[static_cast<std::size_t>(t)], params.dt[static_cast<std::size_t>(t)]));
  for (std::size_t s = 0; s < k.support.size(); ++s) {
    const double p = k.probabilities[s];
    if (p <= 0.0) continue;
    const Vector x = params.X_points.row(static_cast<Eigen::Index>(s)).transpose();
    m.Delta_X += p * x * x.transpose();
    for (int t = 0; t < T; ++t) {
      const Vector y = params.Y_points[static_cast<std::size_t>(t)].row(k.support[s][static_cast<std::size_t>(t)]).transpose();
      m.Delta_Y_blocks[static_cast<std::size_t>(t)] += p * y * y.transpose();
    }
  }
  const int total = std::accumulate(params.dt.begin(), params.dt.end(), 0);
  m.Delta_Y = Matrix::Zero(total, total);
  Eigen::Index off = 0;
  for (const auto& b : m.Delta_Y_blocks) {
    m.Delta_Y.block(off, off, b.rows(), b.cols()) = b;
    off += b.rows();
  }
  const Matrix lam = params.lambda_concat();
  const Matrix dx_half = sqrt_psd(m.Delta_X);
  const Matrix inner = dx_half * lam * m.Delta_Y * lam.transpose() * dx_half;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (inner + inner.transpose()));
  const Eigen::Index d = params.d;
  m.Sigma_tilde.resize(d);
  m.V_tilde.resize(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    // eigenvalues come ascending; store non-increasing
    m.Sigma_tilde(j) = std::sqrt(std::max(es.eigenvalues()(d - 1 - j), 0.0));
    m.V_tilde.col(j) = es.eigenvectors().col(d - 1 - j);
  }
  m.L_tilde = inv_sqrt_pd(m.Delta_X) * m.V_tilde * m.Sigma_tilde.cwiseSqrt().asDiagonal();
  m.R_star = m.Sigma_tilde.cwiseInverse().asDiagonal() * m.L_tilde.transpose();
  return m;
}

ErrorCovariance theoretical_error_covariance(const MrdpgParams& params, const MomentMatrices& moments, int atom,
                                             int t, Regime regime) {
  const FiniteKernel& k = params.kernel;
  if (t < 0 || t >= k.num_times()) throw InvalidArgument("theoretical_error_covariance: time out of range");
  if (atom < 0 || atom >= k.num_atoms(t)) throw InvalidArgument("theoretical_error_covariance: atom out of range");
  ErrorCovariance out;
  out.sigma = Matrix::Zero(params.d, params.d);
  const Matrix& f = k.values[static_cast<std::size_t>(t)];
  for (std::size_t s = 0; s < k.support.size(); ++s) {
    const double p = k.probabilities[s];
    if (p <= 0.0) continue;
    const double fz = f(atom, k.support[s][static_cast<std::size_t>(t)]);
    double w = 0.0;
    switch (regime) {
      case Regime::Dense: w = fz * (1.0 - fz); break;
      case Regime::Sparse: w = fz; break;
      case Regime::Exact: w = fz * (1.0 - k.rho * fz); break;
    }
    const Vector x = params.X_points.row(static_cast<Eigen::Index>(s)).transpose();
    out.sigma += p * w * x * x.transpose();
  }
  out.covariance = moments.R_star * out.sigma * moments.R_star.transpose();
  if (regime == Regime::Dense && k.rho != 1.0) {
    out.regime_mismatch = true;
    out.note = "dense regime requested but rho < 1";
  } else if (regime == Regime::Sparse && k.rho == 1.0) {
    out.regime_mismatch = true;
    out.note = "sparse regime requested but rho = 1";
  }
  return out;
}

std::string to_string(Exchangeability e) {
  switch (e) {
    case Exchangeability::Exchangeable: return "exchangeable";
    case Exchangeability::UpToDegree: return "exchangeable_up_to_degree";
    case Exchangeability::Neither: return "neither";
  }
  return "neither";
}

ExchangeVerdict compare_rows(const Vector& a, const Vector& b, double tol) {
  if (a.size() != b.size()) throw InvalidArgument("compare_rows: length mismatch");
  ExchangeVerdict v;
  const double scale = std::max({1.0, a.size() ? a.cwiseAbs().maxCoeff() : 0.0, b.size() ? b.cwiseAbs().maxCoeff() : 0.0});
  const double diff = a.size() ? (a - b).cwiseAbs().maxCoeff() : 0.0;
  if (diff <= tol * scale) {
    v.kind = Exchangeability::Exchangeable;
    v.deviation = diff;
    return v;
  }
  const double bb = b.squaredNorm();
  if (bb > 0.0) {
    const double alpha = a.dot(b) / bb;
    const double dev = (a - alpha * b).cwiseAbs().maxCoeff();
    if (alpha > 0.0 && dev <= tol * scale) {
      v.kind = Exchangeability::UpToDegree;
      v.alpha = alpha;
      v.deviation = dev;
      return v;
    }
  }
  v.kind = Exchangeability::Neither;
  v.deviation = diff;
  return v;
}

ExchangeVerdict exchangeability_check(const FiniteKernel& kernel, int atom, int t, int atom2, int t2, double tol) {
  kernel.validate();
  if (t < 0 || t >= kernel.num_times() || t2 < 0 || t2 >= kernel.num_times()) {
    throw InvalidArgument("exchangeability_check: time out of range");
  }
  if (atom < 0 || atom >= kernel.num_atoms(t) || atom2 < 0 || atom2 >= kernel.num_atoms(t2)) {
    throw InvalidArgument("exchangeability_check: atom out of range");
  }
  std::vector<double> ra, rb;
  for (std::size_t s = 0; s < kernel.support.size(); ++s) {
    if (kernel.probabilities[s] <= 0.0) continue;
    ra.push_back(kernel.values[static_cast<std::size_t>(t)](atom, kernel.support[s][static_cast<std::size_t>(t)]));
    rb.push_back(kernel.values[static_cast<std::size_t>(t2)](atom2, kernel.support[s][static_cast<std::size_t>(t2)]));
  }
  return compare_rows(Eigen::Map<const Vector>(ra.data(), static_cast<Eigen::Index>(ra.size())),
                      Eigen::Map<const Vector>(rb.data(), static_cast<Eigen::Index>(rb.size())), tol);
}

ExchangeVerdict exchangeability_check(std::span<const Matrix> gram, int i, int t, int j, int t2, double tol) {
  const auto T = static_cast<int>(gram.size());
  if (t < 0 || t >= T || t2 < 0 || t2 >= T) throw InvalidArgument("exchangeability_check: time out of range");
  const auto n = gram[static_cast<std::size_t>(t)].rows();
  if (i < 0 || i >= n || j < 0 || j >= n) throw InvalidArgument("exchangeability_check: node out of range");
  return compare_rows(gram[static_cast<std::size_t>(t)].row(i).transpose(), gram[static_cast<std::size_t>(t2)].row(j).transpose(), tol);
}

NoiseFreeEmbedding noise_free_embedding(std::span<const Matrix> gram, int d, std::uint64_t seed, const SvdOptions& options) {
  if (gram.empty()) throw InvalidArgument("noise_free_embedding: empty Gram sequence");
  const auto n = gram.front().rows();
  const auto T = static_cast<Eigen::Index>(gram.size());
  Matrix concat(n, n * T);
  for (Eigen::Index t = 0; t < T; ++t) {
    if (gram[static_cast<std::size_t>(t)].rows() != n || gram[static_cast<std::size_t>(t)].cols() != n) {
      throw InvalidArgument("noise_free_embedding: Gram matrices must be n x n");
    }
    concat.middleCols(t * n, n) = gram[static_cast<std::size_t>(t)];
  }
  NoiseFreeEmbedding out;
  const int probe = static_cast<int>(std::min<Eigen::Index>(d + 5, n));
  TruncatedSvd wide = truncated_svd(concat, std::max(probe, d), seed, options);
  const double s1 = wide.S.size() ? wide.S(0) : 0.0;
  out.rank = s1 > 0.0 ? static_cast<int>((wide.S.array() > 1e-10 * s1).count()) : 0;
  if (out.rank > d) {
    out.warnings.push_back("d = " + std::to_string(d) + " is below the numerical rank " +
                           (out.rank == wide.S.size() ? ">= " : "") + std::to_string(out.rank) +
                           "; information is lost");
  } else if (out.rank < d) {
    out.warnings.push_back("d = " + std::to_string(d) + " exceeds the numerical rank " + std::to_string(out.rank) +
                           "; trailing dimensions are noise");
  }
  out.svd.U = wide.U.leftCols(d);
  out.svd.S = wide.S.head(d);
  out.svd.V = wide.V.leftCols(d);
  const Vector root = out.svd.S.cwiseSqrt();
  out.X = out.svd.U * root.asDiagonal();
  const Matrix y = out.svd.V * root.asDiagonal();
  for (Eigen::Index t = 0; t < T; ++t) out.Y.push_back(y.middleRows(t * n, n));
  return out;
}

void write_mrdpg(const MrdpgParams& params, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["d"] = params.d;
  j["dt"] = params.dt;
  j["signature"] = {params.p, params.q};
  j["reconstruction_error"] = params.reconstruction_error;
  j["rho"] = params.kernel.rho;
  j["support_probabilities"] = params.kernel.probabilities;
  j["support"] = params.kernel.support;
  write_matrix_csv(dir / "X_points.csv", params.X_points);
  std::vector<std::string> files{"X_points.csv"};
  for (std::size_t t = 0; t < params.Lambda.size(); ++t) {
    const std::string y = "Y_points_" + std::to_string(t + 1) + ".csv";
    const std::string l = "Lambda_" + std::to_string(t + 1) + ".csv";
    write_matrix_csv(dir / y, params.Y_points[t]);
    write_matrix_csv(dir / l, params.Lambda[t]);
    files.push_back(y);
    files.push_back(l);
  }
  j["files"] = files;
  std::ofstream out(dir / "mrdpg.json");
  if (!out) throw DataError("cannot write " + (dir / "mrdpg.json").string());
  out << j.dump(2) << '\n';
}

}  // namespace dynembed
