#include "dynembed/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "dynembed/rng.hpp"

namespace dynembed {

namespace {

constexpr std::uint64_t kGaussianStream = 0x5356445f4f4d4547ULL;

void check_rank(Eigen::Index rows, Eigen::Index cols, int d) {
  if (d < 1 || d > std::min(rows, cols)) {
    throw InvalidArgument("truncated_svd: rank " + std::to_string(d) + " outside [1, " +
                          std::to_string(std::min(rows, cols)) + "]");
  }
}

template <typename M>
void check_finite(const M& m) {
  if constexpr (std::is_same_v<M, SparseMatrix>) {
    for (Eigen::Index k = 0; k < m.nonZeros(); ++k) {
      if (!std::isfinite(m.valuePtr()[k])) throw InvalidArgument("truncated_svd: non-finite entry");
    }
  } else {
    if (!m.allFinite()) throw InvalidArgument("truncated_svd: non-finite entry");
  }
}

Matrix orthonormal_basis(const Matrix& y) {
  Eigen::HouseholderQR<Matrix> qr(y);
  return qr.householderQ() * Matrix::Identity(y.rows(), y.cols());
}

TruncatedSvd dense_svd(const Matrix& m, int d) {
  Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  TruncatedSvd out;
  out.U = svd.matrixU().leftCols(d);
  out.S = svd.singularValues().head(d);
  out.V = svd.matrixV().leftCols(d);
  if (out.U.allFinite() && out.V.allFinite() && out.S.allFinite()) return out;
  // BDCSVD can break down on large, highly degenerate spectra (e.g. a constant matrix).
  Eigen::JacobiSVD<Matrix> jac(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  out.U = jac.matrixU().leftCols(d);
  out.S = jac.singularValues().head(d);
  out.V = jac.matrixV().leftCols(d);
  return out;
}

// Randomized subspace iteration (Halko, Martinsson & Tropp).
template <typename Apply, typename ApplyT>
TruncatedSvd randomized_svd(Eigen::Index rows, Eigen::Index cols, const Apply& apply, const ApplyT& apply_t,
                            int d, std::uint64_t seed, const SvdOptions& options) {
  const auto k = static_cast<Eigen::Index>(
      std::min<Eigen::Index>(d + std::max(options.oversample, 0), std::min(rows, cols)));
  Matrix omega(cols, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    for (Eigen::Index i = 0; i < cols; ++i) {
      omega(i, j) = standard_normal(seed, kGaussianStream, static_cast<std::uint64_t>(j), static_cast<std::uint64_t>(i));
    }
  }
  Matrix q = orthonormal_basis(apply(omega));
  for (int it = 0; it < options.power_iterations; ++it) {
    const Matrix z = orthonormal_basis(apply_t(q));
    q = orthonormal_basis(apply(z));
  }
  const Matrix bt = apply_t(q);  // (Q^T M)^T, cols x k
  Eigen::JacobiSVD<Matrix> small(bt, Eigen::ComputeThinU | Eigen::ComputeThinV);
  TruncatedSvd out;
  out.S = small.singularValues().head(d);
  out.U = q * small.matrixV().leftCols(d);
  out.V = small.matrixU().leftCols(d);
  return out;
}

bool use_dense(const SvdOptions& options, Eigen::Index rows, Eigen::Index cols) {
  switch (options.method) {
    case SvdMethod::Dense:
      return true;
    case SvdMethod::Randomized:
      return false;
    case SvdMethod::Auto:
      break;
  }
  return static_cast<double>(rows) * static_cast<double>(cols) <= options.dense_limit;
}

}  // namespace

void canonicalize_signs(TruncatedSvd& svd) {
  for (Eigen::Index j = 0; j < svd.U.cols(); ++j) {
    Eigen::Index best = 0;
    double best_abs = -1.0;
    for (Eigen::Index i = 0; i < svd.U.rows(); ++i) {
      const double a = std::abs(svd.U(i, j));
      if (a > best_abs) {
        best_abs = a;
        best = i;
      }
    }
    if (svd.U.rows() > 0 && svd.U(best, j) < 0.0) {
      svd.U.col(j) *= -1.0;
      svd.V.col(j) *= -1.0;
    }
  }
}

TruncatedSvd truncated_svd(const Matrix& m, int d, std::uint64_t seed, const SvdOptions& options) {
  check_rank(m.rows(), m.cols(), d);
  check_finite(m);
  TruncatedSvd out = use_dense(options, m.rows(), m.cols())
                         ? dense_svd(m, d)
                         : randomized_svd(
                               m.rows(), m.cols(), [&](const Matrix& x) -> Matrix { return m * x; },
                               [&](const Matrix& x) -> Matrix { return m.transpose() * x; }, d, seed, options);
  canonicalize_signs(out);
  return out;
}

TruncatedSvd truncated_svd(const SparseMatrix& m, int d, std::uint64_t seed, const SvdOptions& options) {
  check_rank(m.rows(), m.cols(), d);
  check_finite(m);
  TruncatedSvd out;
  if (use_dense(options, m.rows(), m.cols())) {
    out = dense_svd(Matrix(m), d);
  } else {
    const SparseMatrix mt = m.transpose();
    out = randomized_svd(
        m.rows(), m.cols(), [&](const Matrix& x) -> Matrix { return m * x; },
        [&](const Matrix& x) -> Matrix { return mt * x; }, d, seed, options);
  }
  canonicalize_signs(out);
  return out;
}

TruncatedSvd truncated_svd(const LinearOperator& op, int d, std::uint64_t seed, const SvdOptions& options) {
  check_rank(op.rows, op.cols, d);
  TruncatedSvd out = randomized_svd(op.rows, op.cols, op.apply, op.apply_transpose, d, seed, options);
  canonicalize_signs(out);
  return out;
}

ProcrustesResult procrustes(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw InvalidArgument("procrustes: shape mismatch");
  if (!a.allFinite() || !b.allFinite()) throw InvalidArgument("procrustes: non-finite entry");
  const Matrix cross = a.transpose() * b;
  Eigen::JacobiSVD<Matrix> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  ProcrustesResult out;
  out.Q = svd.matrixU() * svd.matrixV().transpose();
  out.residual = (a * out.Q - b).norm();
  const Vector& s = svd.singularValues();
  const double smax = s.size() > 0 ? s(0) : 0.0;
  out.unique = s.size() == 0 || (smax > 0.0 && s(s.size() - 1) > 1e-12 * smax);
  return out;
}

int numerical_rank(const Matrix& m, double rel_tol) {
  if (m.size() == 0) return 0;
  Eigen::BDCSVD<Matrix> svd(m);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  return static_cast<int>((s.array() > rel_tol * s(0)).count());
}

Matrix sqrt_psd(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
  const Vector vals = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().transpose();
}

Matrix inv_sqrt_pd(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
  if (es.eigenvalues().minCoeff() <= 0.0) throw InvalidArgument("inv_sqrt_pd: matrix is not positive definite");
  const Vector vals = es.eigenvalues().cwiseSqrt().cwiseInverse();
  return es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().transpose();
}

SphericalCoordinates spherical_coordinates(const Matrix& y, AngleRange range) {
  const Eigen::Index n = y.rows();
  const Eigen::Index d = y.cols();
  if (d < 2) throw InvalidArgument("spherical_coordinates: need at least 2 columns");
  SphericalCoordinates out;
  out.angles = Matrix::Zero(n, d - 1);
  out.active.assign(static_cast<std::size_t>(n), false);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  auto reduce = [&](double theta) {
    if (range == AngleRange::Signed) return theta;
    if (theta < 0.0) theta += two_pi;
    if (theta >= two_pi) theta = 0.0;
    return theta + 0.0;  // -0.0 -> +0.0
  };
  for (Eigen::Index i = 0; i < n; ++i) {
    if (y.row(i).squaredNorm() == 0.0) continue;
    out.active[static_cast<std::size_t>(i)] = true;
    out.angles(i, 0) = reduce(std::atan2(y(i, 1), y(i, 0)));
    double partial = std::hypot(y(i, 0), y(i, 1));
    for (Eigen::Index j = 1; j < d - 1; ++j) {
      out.angles(i, j) = reduce(std::atan2(y(i, j + 1), partial));
      partial = std::hypot(partial, y(i, j + 1));
    }
  }
  return out;
}

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_matrix_csv(const std::filesystem::path& path, const Matrix& m, const std::vector<std::string>& header) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  if (!header.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j) out << (j ? "," : "") << header[j];
    out << '\n';
  }
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << format_double(m(i, j));
    out << '\n';
  }
}

Matrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (!numeric) {
      if (rows.empty() && lineno == 1) continue;  // header
      throw ParseError(path.string(), lineno, "non-numeric cell");
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError(path.string(), lineno, "ragged row");
    }
    rows.push_back(std::move(row));
  }
  Matrix m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return m;
}

}  // namespace dynembed
