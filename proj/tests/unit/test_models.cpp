#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dynembed/models.hpp"
#include "dynembed/mrdpg.hpp"
#include "helpers.hpp"

using namespace dynembed;

namespace {

DsbmSpec parse_spec(const std::string& text) {
  std::istringstream in(text);
  return DsbmSpec::from_config(KeyValueConfig::parse(in));
}

DsbmSpec random_spec(int K, int T, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DsbmSpec spec;
  spec.K = K;
  spec.T = T;
  for (int t = 0; t < T; ++t) {
    Matrix b(K, K);
    for (int i = 0; i < K; ++i) {
      for (int j = i; j < K; ++j) b(i, j) = b(j, i) = u(rng);
    }
    spec.B.push_back(b);
  }
  for (int k = 0; k < K; ++k) {
    std::vector<int> seq;
    for (int t = 0; t < T; ++t) seq.push_back(static_cast<int>(rng() % static_cast<std::uint64_t>(K)));
    spec.sequences.push_back(seq);
    spec.probabilities.push_back(1.0 / K);
  }
  spec.assignment = Assignment::Random;
  return spec;
}

// Two-sample Kolmogorov-Smirnov p-value with the asymptotic distribution.
double ks_pvalue(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double dmax = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    dmax = std::max(dmax, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  const double ne = static_cast<double>(a.size()) * b.size() / (a.size() + b.size());
  const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * dmax;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(p, 0.0, 1.0);
}

std::vector<double> degrees(const SparseMatrix& a) {
  std::vector<double> d(static_cast<std::size_t>(a.cols()));
  for (int c = 0; c < a.outerSize(); ++c) d[static_cast<std::size_t>(c)] = SparseMatrix(a.col(c)).nonZeros();
  return d;
}

}  // namespace

TEST_SUITE("models") {
  TEST_CASE("config parsing with defaults") {
    const auto spec = parse_spec("K = 2\nT = 1\nB1 = 0.5 0.1; 0.1 0.4\n");
    CHECK(spec.sequences == std::vector<std::vector<int>>{{0}, {1}});
    CHECK(spec.probabilities == std::vector<double>{0.5, 0.5});
    CHECK(spec.assignment == Assignment::Balanced);
    CHECK(spec.degree == DegreeModel::None);
    CHECK(spec.rho == 1.0);
  }

  TEST_CASE("config sequences are 1-based and switches are allowed") {
    const auto spec = parse_spec("K = 2\nT = 2\nB1 = 0.5 0.1; 0.1 0.4\nB2 = 0.5 0.1; 0.1 0.4\n"
                                 "sequences = 1 2; 2 2\nprobabilities = 0.3 0.7\nassignment = random\n");
    CHECK(spec.sequences == std::vector<std::vector<int>>{{0, 1}, {1, 1}});
    CHECK(spec.assignment == Assignment::Random);
  }

  TEST_CASE("invalid specs are rejected") {
    CHECK_THROWS_AS(parse_spec("K = 2\nT = 1\nB1 = 0.5 0.2; 0.1 0.4\n"), ParameterError);
    CHECK_THROWS_AS(parse_spec("K = 1\nT = 1\nB1 = 1.5\n"), ParameterError);
    CHECK_THROWS_AS(parse_spec("K = 1\nT = 1\nB1 = 0.5\nrho = 0\n"), ParameterError);
    CHECK_THROWS_AS(parse_spec("K = 1\nT = 2\nB1 = 0.5\n"), Error);
    CHECK_THROWS_AS(parse_spec("K = 2\nT = 1\nB1 = 0.5 0.1; 0.1 0.4\nprobabilities = 0.2 0.2\n"), ParameterError);
  }

  TEST_CASE("bundled fig1 config equals the built-in spec") {
    const auto file = DsbmSpec::load(DYNEMBED_DATA_DIR "/fig1.cfg");
    const auto builtin = four_community_merge_spec();
    REQUIRE(file.T == 2);
    for (int t = 0; t < 2; ++t) CHECK(file.B[static_cast<std::size_t>(t)] == builtin.B[static_cast<std::size_t>(t)]);
    CHECK(file.sequences == builtin.sequences);
    CHECK(file.default_n == 1000);
  }

  TEST_CASE("constant kernel Gram matrix") {
    const auto spec = parse_spec("K = 1\nT = 2\nB1 = 0.3\nB2 = 0.3\n");
    const auto z = draw_latent(spec, 6, 1);
    for (const auto& p : gram_matrices(spec, z)) CHECK((p - Matrix::Constant(6, 6, 0.3)).norm() == 0.0);
  }

  TEST_CASE("fig1: community 1 to community 3 at t=1 is 0.18") {
    const auto spec = four_community_merge_spec();
    const auto z = draw_latent(spec, 1000, 1);
    const auto p = gram_matrices(spec, z);
    int i = -1, j = -1;
    for (int k = 0; k < 1000; ++k) {
      if (z.community(k, 0) == 0 && i < 0) i = k;
      if (z.community(k, 0) == 2 && j < 0) j = k;
    }
    REQUIRE(i >= 0);
    REQUIRE(j >= 0);
    CHECK(p[0](i, j) == doctest::Approx(0.18));
  }

  TEST_CASE("balanced assignment splits nodes equally") {
    const auto z = draw_latent(four_community_merge_spec(), 1000, 3);
    for (int c = 0; c < 4; ++c) CHECK((z.community.col(0).array() == c).count() == 250);
    CHECK(z.community.col(0) == z.community.col(1));
  }

  TEST_CASE("Gram matrices match direct evaluation with degree weights and sparsity") {
    std::mt19937_64 rng(21);
    for (int rep = 0; rep < 5; ++rep) {
      auto spec = random_spec(3, 2, rng);
      spec.degree = DegreeModel::Uniform;
      spec.rho = 0.7;
      const auto z = draw_latent(spec, 10, rep);
      const auto p = gram_matrices(spec, z);
      for (int t = 0; t < 2; ++t) {
        for (int i = 0; i < 10; ++i) {
          for (int j = 0; j < 10; ++j) {
            const double expect = spec.rho * z.weight(i) * z.weight(j) *
                                  spec.B[static_cast<std::size_t>(t)](z.community(i, t), z.community(j, t));
            CHECK(p[static_cast<std::size_t>(t)](i, j) == doctest::Approx(expect).epsilon(1e-14));
          }
        }
      }
      CHECK(z.weight.minCoeff() > spec.weight_low - 1e-12);
      CHECK(z.weight.maxCoeff() <= 1.0);
    }
  }

  TEST_CASE("explicit weights must match the node count") {
    const auto spec = parse_spec("K = 1\nT = 1\nB1 = 0.9\ndegree = explicit\nweights = 1 0.5\n");
    const auto z = draw_latent(spec, 2, 0);
    CHECK(gram_matrices(spec, z)[0](0, 1) == doctest::Approx(0.45));
    CHECK_THROWS_AS(draw_latent(spec, 3, 0), Error);
  }

  TEST_CASE("all-zero and all-one Gram matrices") {
    const std::vector<Matrix> zero{Matrix::Zero(5, 5)};
    CHECK(sample_adjacency(zero, 1).edge_count(0) == 0);
    const std::vector<Matrix> one{Matrix::Ones(5, 5)};
    CHECK(sample_adjacency(one, 1).edge_count(0) == 10);
  }

  TEST_CASE("Erdos-Renyi sample") {
    const auto spec = parse_spec("K = 1\nT = 1\nB1 = 0.5\n");
    const auto s = sample_dsbm(spec, 4, 9);
    CHECK(s.graphs.num_nodes() == 4);
    CHECK(s.graphs.edge_count(0) <= 6);
    const auto big = sample_dsbm(spec, 300, 9);
    CHECK(big.graphs.density(0) == doctest::Approx(0.5).epsilon(0.03));
  }

  TEST_CASE("fig1 block densities are within 4 binomial standard errors") {
    const auto spec = four_community_merge_spec();
    const auto s = sample_dsbm(spec, 1000, 5);
    for (int t = 0; t < 2; ++t) {
      const Matrix a(s.graphs.adjacency(t));
      for (int k = 0; k < 4; ++k) {
        for (int l = k; l < 4; ++l) {
          double edges = 0.0, pairs = 0.0;
          for (int i = 0; i < 1000; ++i) {
            if (s.latent.community(i, t) != k) continue;
            for (int j = 0; j < 1000; ++j) {
              if (s.latent.community(j, t) != l || (k == l && j <= i)) continue;
              pairs += 1.0;
              edges += a(i, j);
            }
          }
          const double p = spec.B[static_cast<std::size_t>(t)](k, l);
          const double se = std::sqrt(p * (1.0 - p) / pairs);
          CHECK(std::abs(edges / pairs - p) < 4.0 * se);
        }
      }
    }
  }

  TEST_CASE("fixed seed reproduces the sample; different seeds differ") {
    const auto spec = four_community_merge_spec();
    const auto a = sample_dsbm(spec, 200, 17);
    const auto b = sample_dsbm(spec, 200, 17);
    const auto c = sample_dsbm(spec, 200, 18);
    CHECK(a.graphs == b.graphs);
    CHECK_FALSE(a.graphs == c.graphs);
  }

  TEST_CASE("node exchangeability: permuted Grams give the same degree distribution") {
    const auto spec = four_community_merge_spec();
    const auto z = draw_latent(spec, 500, 1);
    const auto p = gram_matrices(spec, z);
    std::mt19937_64 rng(22);
    std::vector<int> perm(500);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      std::shuffle(perm.begin(), perm.end(), rng);
      std::vector<Matrix> permuted;
      for (const auto& m : p) {
        Matrix q(500, 500);
        for (int i = 0; i < 500; ++i) {
          for (int j = 0; j < 500; ++j) q(perm[i], perm[j]) = m(i, j);
        }
        permuted.push_back(q);
      }
      const auto g1 = sample_adjacency(p, seed);
      const auto g2 = sample_adjacency(permuted, seed + 1000);
      for (int t = 0; t < 2; ++t) CHECK(ks_pvalue(degrees(g1.adjacency(t)), degrees(g2.adjacency(t))) > 0.01);
    }
  }

  TEST_CASE("Gram ranks respect the theoretical bounds") {
    const auto spec = four_community_merge_spec();
    const auto s = sample_dsbm(spec, 80, 2);
    const auto params = construct_mrdpg(finite_kernel(spec));
    Matrix concat(80, 160);
    concat << s.gram[0], s.gram[1];
    Eigen::JacobiSVD<Matrix> svd(concat);
    const Vector& sv = svd.singularValues();
    for (Eigen::Index k = params.d; k < sv.size(); ++k) CHECK(sv(k) < 1e-8 * sv(0));
    for (int t = 0; t < 2; ++t) CHECK(numerical_rank(s.gram[static_cast<std::size_t>(t)]) <= spec.K);
  }

  TEST_CASE("degree correction makes same-community Gram rows proportional") {
    auto spec = four_community_merge_spec();
    spec.degree = DegreeModel::Uniform;
    const auto z = draw_latent(spec, 40, 4);
    const auto p = gram_matrices(spec, z);
    for (int i = 0; i < 40; ++i) {
      for (int j = 0; j < 40; ++j) {
        if (z.community(i, 0) != z.community(j, 0)) continue;
        const Vector a = p[0].row(i).transpose();
        const Vector b = p[0].row(j).transpose();
        CHECK((a - (z.weight(i) / z.weight(j)) * b).cwiseAbs().maxCoeff() < 1e-14);
      }
    }
  }
}
