#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dynembed/embedders.hpp"
#include "dynembed/models.hpp"
#include "dynembed/mrdpg.hpp"
#include "dynembed/stability.hpp"
#include "helpers.hpp"

using namespace dynembed;

namespace {

Embedding as_embedding(const std::vector<Matrix>& y) {
  Embedding e;
  e.Y = y;
  for (const auto& m : y) e.dims.push_back(static_cast<int>(m.cols()));
  return e;
}

const PairResult* find_pair(const StabilityReport& r, GroupRef a, GroupRef b) {
  for (const auto& p : r.pairs) {
    if ((p.a == a && p.b == b) || (p.a == b && p.b == a)) return &p;
  }
  return nullptr;
}

DsbmSpec constant_spec(double p) {
  DsbmSpec s;
  s.K = 1;
  s.T = 2;
  s.B = {Matrix::Constant(1, 1, p), Matrix::Constant(1, 1, p)};
  s.sequences = {{0, 0}};
  s.probabilities = {1.0};
  return s;
}

}  // namespace

TEST_SUITE("stability") {
  TEST_CASE("fig1 exchangeable pairs") {
    const auto pairs = exchangeable_pairs(finite_kernel(four_community_merge_spec()), true);
    // Community 4 at both times, and communities 1 and 2 after the merge.
    CHECK(pairs.size() == 2);
    CHECK(std::count(pairs.begin(), pairs.end(), GroupPair{{3, 0}, {3, 1}}) == 1);
    CHECK(std::count(pairs.begin(), pairs.end(), GroupPair{{0, 1}, {1, 1}}) == 1);
  }

  TEST_CASE("noise-free embedding has zero centroid gaps") {
    const auto spec = four_community_merge_spec();
    const auto s = sample_dsbm(spec, 200, 3);
    const auto nf = noise_free_embedding(s.gram, 4);
    const auto report = stability_report(as_embedding(nf.Y), stability_truth(spec, s.latent));
    REQUIRE(report.pairs.size() == 2);
    for (const auto& p : report.pairs) {
      CHECK(p.centroid_gap < 1e-10);
      CHECK(p.separation > 0.01);
      CHECK(p.pass);
      CHECK(p.cov_gap < 1e-6);
    }
    CHECK(report.all_pass());
  }

  TEST_CASE("report is invariant under a global orthogonal transform") {
    const auto spec = four_community_merge_spec();
    const auto s = sample_dsbm(spec, 300, 4);
    const auto e = uase(s.graphs, 4, 0);
    std::mt19937_64 rng(7);
    const Matrix q = testing::random_orthogonal(4, rng);
    Embedding rotated = e;
    for (auto& y : rotated.Y) y = y * q;
    const auto truth = stability_truth(spec, s.latent);
    const auto r1 = stability_report(e, truth);
    const auto r2 = stability_report(rotated, truth);
    REQUIRE(r1.pairs.size() == r2.pairs.size());
    for (std::size_t i = 0; i < r1.pairs.size(); ++i) {
      CHECK(r1.pairs[i].gap_ratio == doctest::Approx(r2.pairs[i].gap_ratio).epsilon(1e-9));
      CHECK(r1.pairs[i].cov_gap == doctest::Approx(r2.pairs[i].cov_gap).epsilon(1e-9));
    }
  }

  TEST_CASE("hand-built embedding: gap ratio by hand") {
    // Two atoms at one time, atoms exchangeable by construction only for the
    // explicit pair given below.
    FiniteKernel k;
    k.values = {(Matrix(3, 3) << 0.5, 0.5, 0.1, 0.5, 0.5, 0.1, 0.1, 0.1, 0.4).finished()};
    k.support = {{0}, {1}, {2}};
    k.probabilities = {1.0 / 3, 1.0 / 3, 1.0 / 3};
    StabilityTruth truth{k, {0, 0, 1, 1, 2, 2}};
    Matrix y(6, 2);
    y << 1, 0, 1, 0.2, 1.1, 0, 1.1, 0.2, -1, 0, -1, 0;
    const auto r = stability_report(as_embedding({y}), truth);
    REQUIRE(r.pairs.size() == 1);
    const auto& p = r.pairs[0];
    CHECK(p.kind == Exchangeability::Exchangeable);
    CHECK(p.centroid_gap == doctest::Approx(0.1));
    // Nearest non-exchangeable centroid: (-1, 0) from (1, 0.1).
    CHECK(p.separation == doctest::Approx(std::sqrt(4.0 + 0.01)));
    CHECK(p.gap_ratio == doctest::Approx(0.1 / std::sqrt(4.01)));
    CHECK(p.pass);
    CHECK(p.cov_gap == doctest::Approx(0.0).epsilon(1e-12));
  }

  TEST_CASE("explicit non-exchangeable pair never passes") {
    const auto spec = four_community_merge_spec();
    const auto s = sample_dsbm(spec, 200, 5);
    const auto nf = noise_free_embedding(s.gram, 4);
    StabilityOptions o;
    o.pairs = {{{0, 0}, {1, 0}}};
    const auto r = stability_report(as_embedding(nf.Y), stability_truth(spec, s.latent), o);
    REQUIRE(r.pairs.size() == 1);
    CHECK(r.pairs[0].kind == Exchangeability::Neither);
    CHECK_FALSE(r.pairs[0].pass);
    CHECK_FALSE(r.all_pass());
    o.pairs = {{{7, 0}, {1, 0}}};
    CHECK_THROWS_AS(stability_report(as_embedding(nf.Y), stability_truth(spec, s.latent), o), InvalidArgument);
  }

  TEST_CASE("mismatched inputs are data errors") {
    const auto spec = four_community_merge_spec();
    const auto s = sample_dsbm(spec, 100, 5);
    const auto nf = noise_free_embedding(s.gram, 4);
    auto truth = stability_truth(spec, s.latent);
    truth.node_support.pop_back();
    CHECK_THROWS_AS(stability_report(as_embedding(nf.Y), truth), DataError);
    CHECK_THROWS_AS(stability_report(as_embedding({nf.Y[0]}), stability_truth(spec, s.latent)), DataError);
  }

  TEST_CASE("report formatting") {
    const auto spec = four_community_merge_spec();
    const auto s = sample_dsbm(spec, 200, 3);
    const auto nf = noise_free_embedding(s.gram, 4);
    const auto r = stability_report(as_embedding(nf.Y), stability_truth(spec, s.latent));
    const auto text = format_report(r);
    CHECK(text.find("(4, t=1)") != std::string::npos);
    CHECK(text.find("PASS") != std::string::npos);
    const auto dir = testing::temp_dir("stability_csv");
    write_report_csv(r, dir / "s.csv");
    std::ifstream in(dir / "s.csv");
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header.rfind("community_a,time_a", 0) == 0);
    CHECK(row.back() == '1');
  }

  TEST_CASE("relative Frobenius distance") {
    const Matrix a = Matrix::Identity(2, 2);
    CHECK(relative_frobenius(a, a) == 0.0);
    CHECK(relative_frobenius(Matrix::Zero(2, 2), Matrix::Zero(2, 2)) == 0.0);
    CHECK(relative_frobenius(a, 2 * a) == doctest::Approx(std::sqrt(2.0) / (1.5 * std::sqrt(2.0))));
    CHECK(relative_frobenius(a, 3 * a) == relative_frobenius(3 * a, a));
  }

  TEST_CASE("consistency on noise-free input is zero") {
    ConsistencyOptions o;
    o.sizes = {100, 200};
    o.reps = 2;
    o.noise_free = true;
    const auto curve = consistency_curve(four_community_merge_spec(), o);
    REQUIRE(curve.size() == 2);
    for (const auto& pt : curve) CHECK(pt.median_error < 1e-8);
  }

  TEST_CASE("consistency argument checks") {
    ConsistencyOptions o;
    o.sizes = {200, 100};
    CHECK_THROWS_AS(consistency_curve(four_community_merge_spec(), o), InvalidArgument);
    o.sizes = {20};
    CHECK_THROWS_AS(consistency_curve(four_community_merge_spec(), o), InvalidArgument);
    o.sizes = {100};
    o.reps = 0;
    CHECK_THROWS_AS(consistency_curve(four_community_merge_spec(), o), InvalidArgument);
  }

  TEST_CASE("halving the sparsity factor scales the relative error by about sqrt(2)") {
    auto spec = four_community_merge_spec();
    ConsistencyOptions o;
    o.sizes = {1000};
    o.reps = 5;
    o.seed = 11;
    spec.rho = 0.5;
    const double e1 = consistency_curve(spec, o)[0].median_relative;
    spec.rho = 0.25;
    const double e2 = consistency_curve(spec, o)[0].median_relative;
    const double ratio = e2 / e1;
    CHECK(ratio > std::sqrt(2.0) * 0.75);
    CHECK(ratio < std::sqrt(2.0) * 1.25);
  }

  TEST_CASE("CLT on the constant kernel: mean near zero, covariance matches") {
    CltOptions o;
    o.n = 600;
    o.reps = 6;
    o.seed = 2;
    const auto r = clt_check(constant_spec(0.3), o);
    CHECK(r.pooled == 600 * 6);
    CHECK(r.mean_ok);
    CHECK(r.theory_covariance(0, 0) == doctest::Approx(0.7 / std::sqrt(2.0)).epsilon(1e-9));
    CHECK(r.theory_gap_aligned < 0.15);
  }

  TEST_CASE("CLT argument checks") {
    CltOptions o;
    o.target = {5, 0};
    CHECK_THROWS_AS(clt_check(four_community_merge_spec(), o), InvalidArgument);
    auto spec = four_community_merge_spec();
    spec.degree = DegreeModel::Uniform;
    spec.weight_low = 0.5;
    o.target = {0, 0};
    CHECK_THROWS_AS(clt_check(spec, o), InvalidArgument);
  }
}
