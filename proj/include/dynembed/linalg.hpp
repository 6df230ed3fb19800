#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dynembed/common.hpp"

namespace dynembed {

// Top-d singular triplets: M ~ U diag(S) V^T.
struct TruncatedSvd {
  Matrix U;  // m x d, orthonormal columns
  Vector S;  // d, non-increasing, non-negative
  Matrix V;  // p x d, orthonormal columns
};

enum class SvdMethod { Auto, Dense, Randomized };

struct SvdOptions {
  SvdMethod method = SvdMethod::Auto;
  int oversample = 10;
  int power_iterations = 4;
  // Auto uses the exact dense SVD when rows * cols is at most this.
  double dense_limit = 1e6;
};

// A matrix known only through products with blocks of vectors. Used for
// the omnibus matrix when it is too large to materialize.
struct LinearOperator {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::function<Matrix(const Matrix&)> apply;            // M X
  std::function<Matrix(const Matrix&)> apply_transpose;  // M^T X
};

// Columns of U are sign-normalised: the entry of largest magnitude in each
// column is positive (first such entry on ties); V follows U.
TruncatedSvd truncated_svd(const Matrix& m, int d, std::uint64_t seed, const SvdOptions& options = {});
TruncatedSvd truncated_svd(const SparseMatrix& m, int d, std::uint64_t seed, const SvdOptions& options = {});
TruncatedSvd truncated_svd(const LinearOperator& op, int d, std::uint64_t seed, const SvdOptions& options = {});

// Flip column signs of (U, V) to the canonical convention above.
void canonicalize_signs(TruncatedSvd& svd);

struct ProcrustesResult {
  Matrix Q;               // d x d orthogonal
  double residual = 0.0;  // ||A Q - B||_F
  bool unique = true;     // false when A^T B is rank deficient
};

// argmin over orthogonal Q of ||A Q - B||_F via the SVD of A^T B.
ProcrustesResult procrustes(const Matrix& a, const Matrix& b);

// Numerical rank: singular values above rel_tol * sigma_1.
int numerical_rank(const Matrix& m, double rel_tol = 1e-10);

// Symmetric PSD square root (and inverse square root) via eigendecomposition.
Matrix sqrt_psd(const Matrix& m);
Matrix inv_sqrt_pd(const Matrix& m);

enum class AngleRange {
  ZeroToTwoPi,  // every angle reduced mod 2 pi into [0, 2 pi)
  Signed,       // raw atan2 output: first angle in (-pi, pi], rest in [-pi/2, pi/2]
};

struct SphericalCoordinates {
  Matrix angles;             // n x (d - 1); zero rows where inactive
  std::vector<bool> active;  // false for all-zero input rows
};

// theta_1 = atan2(x_2, x_1); theta_j = atan2(x_{j+1}, ||x_{1..j}||) for j >= 2.
// Invariant under positive scaling of a row.
SphericalCoordinates spherical_coordinates(const Matrix& y, AngleRange range = AngleRange::ZeroToTwoPi);

// CSV with 17 significant digits. The header line is optional on read
// (detected by a non-numeric first field).
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m,
                      const std::vector<std::string>& header = {});
Matrix read_matrix_csv(const std::filesystem::path& path);

// "%.17g" formatting used by every CSV writer.
std::string format_double(double x);

}  // namespace dynembed
