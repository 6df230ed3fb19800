#include <doctest.h>

#include <cmath>

#include "dynembed/mrdpg.hpp"
#include "dynembed/rng.hpp"
#include "helpers.hpp"

using namespace dynembed;

namespace {

DsbmSpec constant_spec(double p, int T) {
  DsbmSpec spec;
  spec.K = 1;
  spec.T = T;
  spec.B.assign(static_cast<std::size_t>(T), Matrix::Constant(1, 1, p));
  spec.sequences = {std::vector<int>(static_cast<std::size_t>(T), 0)};
  spec.probabilities = {1.0};
  return spec;
}

FiniteKernel random_kernel(int K, int T, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  FiniteKernel k;
  for (int t = 0; t < T; ++t) {
    Matrix b(K, K);
    for (int i = 0; i < K; ++i) {
      for (int j = i; j < K; ++j) b(i, j) = b(j, i) = u(rng);
    }
    k.values.push_back(b);
  }
  // Every pair of atoms across the two times, with random probabilities.
  double total = 0.0;
  for (int a = 0; a < K; ++a) {
    for (int b = 0; b < K; ++b) {
      k.support.push_back({a, b});
      k.probabilities.push_back(0.1 + u(rng));
      total += k.probabilities.back();
    }
  }
  for (auto& p : k.probabilities) p /= total;
  return k;
}

double max_reconstruction_gap(const MrdpgParams& p) {
  const FiniteKernel& k = p.kernel;
  double gap = 0.0;
  for (int t = 0; t < k.num_times(); ++t) {
    for (std::size_t s = 0; s < k.support.size(); ++s) {
      for (int b = 0; b < k.num_atoms(t); ++b) {
        const double direct = k.values[static_cast<std::size_t>(t)](k.support[s][static_cast<std::size_t>(t)], b);
        const double model = p.X_points.row(static_cast<Eigen::Index>(s)) * p.Lambda[static_cast<std::size_t>(t)] *
                             p.Y_points[static_cast<std::size_t>(t)].row(b).transpose();
        gap = std::max(gap, std::abs(direct - model));
      }
    }
  }
  return gap;
}

// Dense oracle for Algorithm 1 on P with the library's sign convention.
std::vector<Matrix> dense_noise_free(const std::vector<Matrix>& gram, int d) {
  const auto n = gram.front().rows();
  Matrix concat(n, n * static_cast<Eigen::Index>(gram.size()));
  for (std::size_t t = 0; t < gram.size(); ++t) concat.middleCols(static_cast<Eigen::Index>(t) * n, n) = gram[t];
  Eigen::JacobiSVD<Matrix> svd(concat, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Matrix u = svd.matrixU().leftCols(d);
  Matrix v = svd.matrixV().leftCols(d);
  for (int j = 0; j < d; ++j) {
    Eigen::Index idx;
    u.col(j).cwiseAbs().maxCoeff(&idx);
    if (u(idx, j) < 0) {
      u.col(j) *= -1.0;
      v.col(j) *= -1.0;
    }
  }
  const Matrix y = v * svd.singularValues().head(d).cwiseSqrt().asDiagonal();
  std::vector<Matrix> out;
  for (std::size_t t = 0; t < gram.size(); ++t) out.push_back(y.middleRows(static_cast<Eigen::Index>(t) * n, n));
  return out;
}

}  // namespace

TEST_SUITE("mrdpg") {
  TEST_CASE("single constant kernel") {
    const double p = 0.36;
    const auto params = construct_mrdpg(finite_kernel(constant_spec(p, 1)));
    CHECK(params.d == 1);
    CHECK(params.dt == std::vector<int>{1});
    CHECK(std::abs(params.X_points(0, 0)) == doctest::Approx(std::sqrt(p)));
    CHECK(std::abs(params.Lambda[0](0, 0)) == doctest::Approx(1.0));
    CHECK(params.X_points(0, 0) * params.Lambda[0](0, 0) * params.Y_points[0](0, 0) == doctest::Approx(p));
  }

  TEST_CASE("fig1 kernel dimensions and reconstruction") {
    const auto params = construct_mrdpg(finite_kernel(four_community_merge_spec()));
    CHECK(params.d == 4);
    CHECK(params.dt == std::vector<int>{4, 3});
    CHECK(params.reconstruction_error < 1e-9);
    CHECK(max_reconstruction_gap(params) < 1e-9);
    CHECK(params.p + params.q == 7);
    for (int t = 0; t < 2; ++t) {
      CHECK(params.Lambda[static_cast<std::size_t>(t)].rows() == 4);
      CHECK(params.Lambda[static_cast<std::size_t>(t)].cols() == params.dt[static_cast<std::size_t>(t)]);
    }
  }

  TEST_CASE("random kernels reconstruct to 1e-9 and ranks agree") {
    std::mt19937_64 rng(31);
    for (int rep = 0; rep < 20; ++rep) {
      const auto k = random_kernel(3, 2, rng);
      const auto params = construct_mrdpg(k);
      CHECK(max_reconstruction_gap(params) < 1e-9);
      CHECK(params.d == numerical_rank(params.Pi));
      // A latent configuration holding every support sequence twice.
      const int n = 2 * static_cast<int>(k.support.size());
      Matrix concat(n, n * 2);
      for (int t = 0; t < 2; ++t) {
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < n; ++j) {
            const auto& si = k.support[static_cast<std::size_t>(i / 2)];
            const auto& sj = k.support[static_cast<std::size_t>(j / 2)];
            concat(i, t * n + j) = k.values[static_cast<std::size_t>(t)](si[static_cast<std::size_t>(t)], sj[static_cast<std::size_t>(t)]);
          }
        }
        CHECK(params.dt[static_cast<std::size_t>(t)] == numerical_rank(concat.middleCols(t * n, n)));
      }
      CHECK(params.d == numerical_rank(concat));
    }
  }

  TEST_CASE("invalid kernels are rejected") {
    FiniteKernel k;
    k.values = {Matrix::Constant(2, 2, 0.5)};
    k.support = {{0}, {2}};
    k.probabilities = {0.5, 0.5};
    CHECK_THROWS_AS(construct_mrdpg(k), InvalidArgument);
    k.support = {{0}, {1}};
    k.probabilities = {0.5, 0.6};
    CHECK_THROWS_AS(construct_mrdpg(k), InvalidArgument);
  }

  TEST_CASE("constant P gives identical noise-free rows") {
    const double p = 0.3;
    const int n = 40;
    const std::vector<Matrix> gram{Matrix::Constant(n, n, p), Matrix::Constant(n, n, p)};
    const auto nf = noise_free_embedding(gram, 1);
    const double expect = std::sqrt(p / std::sqrt(2.0));
    for (int t = 0; t < 2; ++t) {
      CHECK((nf.Y[static_cast<std::size_t>(t)].array().abs() - expect).abs().maxCoeff() < 1e-10);
    }
    CHECK(nf.rank == 1);
  }

  TEST_CASE("fig1 at n=200: community 4 rows coincide across time") {
    const auto s = sample_dsbm(four_community_merge_spec(), 200, 1);
    const auto nf = noise_free_embedding(s.gram, 4);
    for (int i = 0; i < 200; ++i) {
      if (s.latent.community(i, 0) != 3) continue;
      CHECK((nf.Y[0].row(i) - nf.Y[1].row(i)).norm() < 1e-10);
    }
    // Communities 1 and 2 merge at t=2.
    int a = -1, b = -1;
    for (int i = 0; i < 200; ++i) {
      if (s.latent.community(i, 1) == 0 && a < 0) a = i;
      if (s.latent.community(i, 1) == 1 && b < 0) b = i;
    }
    CHECK((nf.Y[1].row(a) - nf.Y[1].row(b)).norm() < 1e-10);
    CHECK((nf.Y[0].row(a) - nf.Y[0].row(b)).norm() > 1e-3);
  }

  TEST_CASE("noise-free embedding matches a dense SVD oracle at n=12") {
    std::mt19937_64 rng(32);
    for (int rep = 0; rep < 5; ++rep) {
      const auto k = random_kernel(3, 2, rng);
      const auto params = construct_mrdpg(k);
      std::vector<Matrix> gram(2, Matrix(12, 12));
      for (int t = 0; t < 2; ++t) {
        for (int i = 0; i < 12; ++i) {
          for (int j = 0; j < 12; ++j) {
            const auto& si = k.support[static_cast<std::size_t>(i % 9)];
            const auto& sj = k.support[static_cast<std::size_t>(j % 9)];
            gram[static_cast<std::size_t>(t)](i, j) = k.values[static_cast<std::size_t>(t)](si[static_cast<std::size_t>(t)], sj[static_cast<std::size_t>(t)]);
          }
        }
      }
      const auto nf = noise_free_embedding(gram, params.d);
      const auto oracle = dense_noise_free(gram, params.d);
      for (int t = 0; t < 2; ++t) CHECK((nf.Y[static_cast<std::size_t>(t)] - oracle[static_cast<std::size_t>(t)]).norm() < 1e-9);
    }
  }

  TEST_CASE("noise-free rank warnings") {
    const auto s = sample_dsbm(four_community_merge_spec(), 40, 3);
    CHECK(noise_free_embedding(s.gram, 4).warnings.empty());
    CHECK_FALSE(noise_free_embedding(s.gram, 2).warnings.empty());
    CHECK_FALSE(noise_free_embedding(s.gram, 6).warnings.empty());
  }

  TEST_CASE("moment matrices are symmetric PSD with ordered Sigma_tilde") {
    const auto params = construct_mrdpg(finite_kernel(four_community_merge_spec()));
    const auto m = compute_moments(params);
    CHECK((m.Delta_X - m.Delta_X.transpose()).norm() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> e(m.Delta_X);
    CHECK(e.eigenvalues().minCoeff() > -1e-12);
    for (Eigen::Index i = 1; i < m.Sigma_tilde.size(); ++i) CHECK(m.Sigma_tilde(i) <= m.Sigma_tilde(i - 1));
  }

  TEST_CASE("Sigma_tilde equals the singular values of P divided by n") {
    const auto spec = four_community_merge_spec();
    const auto params = construct_mrdpg(finite_kernel(spec));
    const auto m = compute_moments(params);
    const auto s = sample_dsbm(spec, 400, 1);
    const auto nf = noise_free_embedding(s.gram, 4);
    for (int i = 0; i < 4; ++i) CHECK(nf.svd.S(i) / 400.0 == doctest::Approx(m.Sigma_tilde(i)).epsilon(1e-9));
  }

  TEST_CASE("constant kernel: Sigma is p(1-p) Delta_X") {
    const double p = 0.3;
    const auto params = construct_mrdpg(finite_kernel(constant_spec(p, 2)));
    const auto m = compute_moments(params);
    const auto cov = theoretical_error_covariance(params, m, 0, 1, Regime::Dense);
    CHECK((cov.sigma - p * (1 - p) * m.Delta_X).norm() < 1e-14);
    CHECK((cov.covariance - p * (1 - p) * m.R_star * m.Delta_X * m.R_star.transpose()).norm() < 1e-14);
    CHECK(cov.covariance(0, 0) == doctest::Approx((1 - p) / std::sqrt(2.0)));
    CHECK_FALSE(cov.regime_mismatch);
    CHECK(theoretical_error_covariance(params, m, 0, 1, Regime::Sparse).regime_mismatch);
  }

  TEST_CASE("fig1: merged communities share their error covariance") {
    const auto params = construct_mrdpg(finite_kernel(four_community_merge_spec()));
    const auto m = compute_moments(params);
    const auto a = theoretical_error_covariance(params, m, 0, 1, Regime::Dense);
    const auto b = theoretical_error_covariance(params, m, 1, 1, Regime::Dense);
    CHECK((a.sigma - b.sigma).norm() < 1e-14);
    const auto c = theoretical_error_covariance(params, m, 3, 0, Regime::Dense);
    const auto d = theoretical_error_covariance(params, m, 3, 1, Regime::Dense);
    CHECK((c.covariance - d.covariance).norm() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> e(a.sigma);
    CHECK(e.eigenvalues().minCoeff() > -1e-14);
  }

  TEST_CASE("Sigma matches a Monte Carlo expectation") {
    DsbmSpec spec;
    spec.K = 2;
    spec.T = 2;
    Matrix b1(2, 2), b2(2, 2);
    b1 << 0.6, 0.2, 0.2, 0.4;
    b2 << 0.3, 0.5, 0.5, 0.1;
    spec.B = {b1, b2};
    spec.sequences = {{0, 0}, {0, 1}, {1, 1}};
    spec.probabilities = {0.5, 0.3, 0.2};
    const auto params = construct_mrdpg(finite_kernel(spec));
    const auto m = compute_moments(params);
    for (int t = 0; t < 2; ++t) {
      const auto exact = theoretical_error_covariance(params, m, 0, t, Regime::Dense).sigma;
      Matrix mc = Matrix::Zero(params.d, params.d);
      const int draws = 1000000;
      for (int r = 0; r < draws; ++r) {
        const double u = uniform01(99, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(r));
        const std::size_t s = u < 0.5 ? 0 : (u < 0.8 ? 1 : 2);
        const double f = spec.B[static_cast<std::size_t>(t)](0, spec.sequences[s][static_cast<std::size_t>(t)]);
        const Vector x = params.X_points.row(static_cast<Eigen::Index>(s)).transpose();
        mc += f * (1 - f) * x * x.transpose();
      }
      mc /= draws;
      CHECK((mc - exact).norm() / exact.norm() < 1e-2);
    }
  }

  TEST_CASE("sparse-regime covariance scales with the degree ratio") {
    // One community, two degree levels: atom 0 has weight 1, atom 1 weight 1/2.
    FiniteKernel k;
    Matrix f(2, 2);
    f << 0.4, 0.2, 0.2, 0.1;
    k.values = {f, f};
    k.support = {{0, 0}, {1, 1}};
    k.probabilities = {0.5, 0.5};
    k.rho = 0.1;
    const auto params = construct_mrdpg(k);
    const auto m = compute_moments(params);
    const auto a = theoretical_error_covariance(params, m, 0, 1, Regime::Sparse);
    const auto b = theoretical_error_covariance(params, m, 1, 1, Regime::Sparse);
    CHECK((a.sigma - 2.0 * b.sigma).norm() < 1e-14);
    CHECK((a.covariance - 2.0 * b.covariance).norm() < 1e-12);
    const auto v = exchangeability_check(k, 0, 0, 1, 1);
    CHECK(v.kind == Exchangeability::UpToDegree);
    CHECK(v.alpha == doctest::Approx(2.0));
  }

  TEST_CASE("fig1 exchangeability verdicts") {
    const auto k = finite_kernel(four_community_merge_spec());
    CHECK(exchangeability_check(k, 3, 0, 3, 1).kind == Exchangeability::Exchangeable);
    CHECK(exchangeability_check(k, 0, 1, 1, 1).kind == Exchangeability::Exchangeable);
    CHECK(exchangeability_check(k, 0, 0, 1, 0).kind == Exchangeability::Neither);
    CHECK(exchangeability_check(k, 2, 0, 2, 1).kind == Exchangeability::Neither);
  }

  TEST_CASE("degree-corrected Gram rows: w_i = 2 w_j is up to degree with alpha 2") {
    auto spec = four_community_merge_spec();
    spec.degree = DegreeModel::Explicit;
    spec.weights = {1.0, 0.5, 0.8, 0.9};
    spec.sequences = {{0, 0}};
    spec.probabilities = {1.0};
    const auto z = draw_latent(spec, 4, 0);
    const auto gram = gram_matrices(spec, z);
    const auto v = exchangeability_check(gram, 0, 0, 1, 0);
    CHECK(v.kind == Exchangeability::UpToDegree);
    CHECK(v.alpha == doctest::Approx(2.0));
    // B changes from 0.08 to 0.16 between the two times.
    const auto across = exchangeability_check(gram, 0, 0, 0, 1);
    CHECK(across.kind == Exchangeability::UpToDegree);
    CHECK(across.alpha == doctest::Approx(0.5));
  }

  TEST_CASE("proportional Gram rows give proportional noise-free rows") {
    auto spec = four_community_merge_spec();
    spec.degree = DegreeModel::Uniform;
    const auto s = sample_dsbm(spec, 60, 8);
    const auto nf = noise_free_embedding(s.gram, 4);
    for (int i = 0; i < 60; ++i) {
      for (int j = 0; j < 60; ++j) {
        if (s.latent.community(i, 1) != s.latent.community(j, 1)) continue;
        const double alpha = s.latent.weight(i) / s.latent.weight(j);
        CHECK((nf.Y[1].row(i) - alpha * nf.Y[1].row(j)).norm() < 1e-9);
      }
    }
  }

  TEST_CASE("compare_rows") {
    Vector a(3), b(3);
    a << 0.2, 0.4, 0.6;
    b << 0.1, 0.2, 0.3;
    CHECK(compare_rows(a, a).kind == Exchangeability::Exchangeable);
    const auto v = compare_rows(a, b);
    CHECK(v.kind == Exchangeability::UpToDegree);
    CHECK(v.alpha == doctest::Approx(2.0));
    b(2) = 0.5;
    CHECK(compare_rows(a, b).kind == Exchangeability::Neither);
  }

  TEST_CASE("params write to a directory") {
    const auto params = construct_mrdpg(finite_kernel(four_community_merge_spec()));
    const auto dir = testing::temp_dir("mrdpg_write");
    write_mrdpg(params, dir);
    CHECK(std::filesystem::exists(dir / "mrdpg.json"));
    CHECK(read_matrix_csv(dir / "X_points.csv").isApprox(params.X_points));
    CHECK(read_matrix_csv(dir / "Lambda_2.csv").isApprox(params.Lambda[1]));
  }
}
