#include "dynembed/stability.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "dynembed/rng.hpp"

namespace dynembed {

namespace {

struct Group {
  std::vector<int> members;
  Vector centroid;
};

Group collect(const Matrix& y, const StabilityTruth& truth, GroupRef g) {
  Group out;
  for (std::size_t i = 0; i < truth.node_support.size(); ++i) {
    if (truth.kernel.support[static_cast<std::size_t>(truth.node_support[i])][static_cast<std::size_t>(g.t)] == g.atom) {
      out.members.push_back(static_cast<int>(i));
    }
  }
  out.centroid = Vector::Zero(y.cols());
  for (int i : out.members) out.centroid += y.row(i).transpose();
  if (!out.members.empty()) out.centroid /= static_cast<double>(out.members.size());
  return out;
}

Matrix group_covariance(const Matrix& y, const Group& g) {
  const auto m = static_cast<double>(g.members.size());
  Matrix c = Matrix::Zero(y.cols(), y.cols());
  for (int i : g.members) {
    const Vector r = y.row(i).transpose() - g.centroid;
    c += r * r.transpose();
  }
  return c / (m - 1.0);
}

std::string group_name(GroupRef g) {
  return "(" + std::to_string(g.atom + 1) + ", t=" + std::to_string(g.t + 1) + ")";
}

std::vector<std::vector<bool>> live_atoms(const FiniteKernel& k) {
  std::vector<std::vector<bool>> live;
  for (int t = 0; t < k.num_times(); ++t) live.emplace_back(static_cast<std::size_t>(k.num_atoms(t)), false);
  for (std::size_t s = 0; s < k.support.size(); ++s) {
    if (k.probabilities[s] <= 0.0) continue;
    for (int t = 0; t < k.num_times(); ++t) live[static_cast<std::size_t>(t)][static_cast<std::size_t>(k.support[s][static_cast<std::size_t>(t)])] = true;
  }
  return live;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// Cached noise-free embedding; reused while the latent configuration repeats.
struct NoiseFreeCache {
  IndexMatrix community;
  Vector weight;
  NoiseFreeEmbedding emb;
  bool valid = false;

  const NoiseFreeEmbedding& get(const DsbmSample& s, int d, const SvdOptions& svd) {
    if (!valid || community != s.latent.community || weight != s.latent.weight) {
      emb = noise_free_embedding(s.gram, d, 0, svd);
      community = s.latent.community;
      weight = s.latent.weight;
      valid = true;
    }
    return emb;
  }
};

int kernel_rank(const DsbmSpec& spec) {
  DsbmSpec plain = spec;
  plain.degree = DegreeModel::None;
  plain.weights.clear();
  return construct_mrdpg(finite_kernel(plain)).d;
}

Matrix stack(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() + b.rows(), a.cols());
  out << a, b;
  return out;
}

}  // namespace

StabilityTruth stability_truth(const DsbmSpec& spec, const LatentSeries& z) {
  if (spec.degree == DegreeModel::None) return {finite_kernel(spec), z.sequence};
  EmpiricalKernel ek = finite_kernel(spec, z);
  return {std::move(ek.kernel), std::move(ek.node_support)};
}

std::vector<GroupPair> exchangeable_pairs(const FiniteKernel& kernel, bool include_up_to_degree, double tol) {
  const auto live = live_atoms(kernel);
  std::vector<GroupRef> groups;
  for (int t = 0; t < kernel.num_times(); ++t) {
    for (int a = 0; a < kernel.num_atoms(t); ++a) {
      if (live[static_cast<std::size_t>(t)][static_cast<std::size_t>(a)]) groups.push_back({a, t});
    }
  }
  std::vector<GroupPair> out;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    for (std::size_t j = i + 1; j < groups.size(); ++j) {
      const auto v = exchangeability_check(kernel, groups[i].atom, groups[i].t, groups[j].atom, groups[j].t, tol);
      if (v.kind == Exchangeability::Exchangeable || (include_up_to_degree && v.kind == Exchangeability::UpToDegree)) {
        out.emplace_back(groups[i], groups[j]);
      }
    }
  }
  return out;
}

bool StabilityReport::all_pass() const {
  return std::all_of(pairs.begin(), pairs.end(), [](const PairResult& p) { return p.pass; });
}

double relative_frobenius(const Matrix& a, const Matrix& b) {
  const double scale = 0.5 * (a.norm() + b.norm());
  if (scale == 0.0) return 0.0;
  return (a - b).norm() / scale;
}

StabilityReport stability_report(const Embedding& emb, const StabilityTruth& truth, const StabilityOptions& options) {
  const FiniteKernel& k = truth.kernel;
  k.validate();
  if (emb.num_times() != k.num_times()) throw DataError("stability_report: embedding and truth differ in T");
  if (emb.num_nodes() != static_cast<int>(truth.node_support.size())) {
    throw DataError("stability_report: embedding has " + std::to_string(emb.num_nodes()) + " nodes, truth has " +
                    std::to_string(truth.node_support.size()));
  }
  for (int s : truth.node_support) {
    if (s < 0 || s >= static_cast<int>(k.support.size())) throw DataError("stability_report: node support out of range");
  }
  const int width = emb.max_dim();
  std::vector<Matrix> y;
  for (int t = 0; t < emb.num_times(); ++t) y.push_back(emb.padded(t, width));

  StabilityReport report;
  report.threshold = options.threshold;
  const auto pairs = options.pairs.empty() ? exchangeable_pairs(k, true, options.tol) : options.pairs;
  const auto live = live_atoms(k);

  for (const auto& [ga, gb] : pairs) {
    for (GroupRef g : {ga, gb}) {
      if (g.t < 0 || g.t >= k.num_times() || g.atom < 0 || g.atom >= k.num_atoms(g.t)) {
        throw InvalidArgument("stability_report: group " + group_name(g) + " is not in the kernel");
      }
    }
    PairResult r;
    r.a = ga;
    r.b = gb;
    const auto verdict = exchangeability_check(k, ga.atom, ga.t, gb.atom, gb.t, options.tol);
    r.kind = verdict.kind;
    r.alpha = verdict.kind == Exchangeability::UpToDegree ? verdict.alpha : 1.0;
    const Matrix& ya = y[static_cast<std::size_t>(ga.t)];
    const Matrix& yb = y[static_cast<std::size_t>(gb.t)];
    const Group a = collect(ya, truth, ga);
    const Group b = collect(yb, truth, gb);
    r.size_a = static_cast<int>(a.members.size());
    r.size_b = static_cast<int>(b.members.size());
    if (a.members.empty() || b.members.empty()) {
      r.note = "empty group";
      report.pairs.push_back(r);
      continue;
    }
    r.centroid_gap = (a.centroid - r.alpha * b.centroid).norm();

    double sep = std::numeric_limits<double>::infinity();
    for (const auto& [self, centroid, ymat] : {std::tuple{ga, a.centroid, &ya}, std::tuple{gb, b.centroid, &yb}}) {
      for (int other = 0; other < k.num_atoms(self.t); ++other) {
        if (other == self.atom || !live[static_cast<std::size_t>(self.t)][static_cast<std::size_t>(other)]) continue;
        const auto v = exchangeability_check(k, self.atom, self.t, other, self.t, options.tol);
        if (v.kind != Exchangeability::Neither) continue;
        const Group g = collect(*ymat, truth, {other, self.t});
        if (g.members.empty()) continue;
        sep = std::min(sep, (centroid - g.centroid).norm());
      }
    }
    if (std::isfinite(sep) && sep > 0.0) {
      r.separation = sep;
      r.gap_ratio = r.centroid_gap / sep;
      r.has_verdict = true;
      r.pass = r.kind != Exchangeability::Neither && r.gap_ratio < options.threshold;
    } else {
      r.separation = std::isfinite(sep) ? sep : 0.0;
      r.note = "no separated non-exchangeable group";
    }
    if (r.kind == Exchangeability::Neither) r.note = "pair is not exchangeable";

    if (r.size_a < 2 || r.size_b < 2) {
      r.cov_skipped = true;
      if (r.note.empty()) r.note = "group smaller than 2: covariance skipped";
    } else {
      r.cov_gap = relative_frobenius(group_covariance(ya, a), r.alpha * r.alpha * group_covariance(yb, b));
    }
    report.pairs.push_back(r);
  }
  return report;
}

std::string format_report(const StabilityReport& report) {
  std::ostringstream os;
  os << std::left << std::setw(14) << "group_a" << std::setw(14) << "group_b" << std::setw(28) << "class"
     << std::right << std::setw(8) << "alpha" << std::setw(12) << "gap" << std::setw(12) << "separation"
     << std::setw(12) << "gap_ratio" << std::setw(12) << "cov_gap" << "  verdict\n";
  os << std::fixed;
  for (const auto& p : report.pairs) {
    os << std::left << std::setw(14) << group_name(p.a) << std::setw(14) << group_name(p.b) << std::setw(28)
       << to_string(p.kind) << std::right << std::setprecision(3) << std::setw(8) << p.alpha << std::setprecision(5)
       << std::setw(12) << p.centroid_gap << std::setw(12) << p.separation << std::setw(12) << p.gap_ratio;
    if (p.cov_skipped) {
      os << std::setw(12) << "-";
    } else {
      os << std::setw(12) << p.cov_gap;
    }
    os << "  " << (p.pass ? "PASS" : "FAIL");
    if (!p.note.empty()) os << " (" << p.note << ")";
    os << '\n';
  }
  os << "threshold gap_ratio < " << std::setprecision(3) << report.threshold << '\n';
  return os.str();
}

void write_report_csv(const StabilityReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "community_a,time_a,community_b,time_b,class,alpha,size_a,size_b,centroid_gap,separation,gap_ratio,cov_gap,"
         "threshold,pass\n";
  for (const auto& p : report.pairs) {
    out << p.a.atom + 1 << ',' << p.a.t + 1 << ',' << p.b.atom + 1 << ',' << p.b.t + 1 << ',' << to_string(p.kind)
        << ',' << format_double(p.alpha) << ',' << p.size_a << ',' << p.size_b << ',' << format_double(p.centroid_gap)
        << ',' << format_double(p.separation) << ',' << format_double(p.gap_ratio) << ','
        << (p.cov_skipped ? std::string("NA") : format_double(p.cov_gap)) << ',' << format_double(report.threshold)
        << ',' << (p.pass ? 1 : 0) << '\n';
  }
}

std::vector<ConsistencyPoint> consistency_curve(const DsbmSpec& spec, const ConsistencyOptions& options) {
  spec.validate();
  if (options.sizes.empty()) throw InvalidArgument("consistency_curve: no sizes");
  if (options.reps < 1) throw InvalidArgument("consistency_curve: reps must be positive");
  for (std::size_t i = 0; i < options.sizes.size(); ++i) {
    if (options.sizes[i] < 10 * spec.K) throw InvalidArgument("consistency_curve: each n must be at least 10 K");
    if (i > 0 && options.sizes[i] <= options.sizes[i - 1]) throw InvalidArgument("consistency_curve: sizes must increase");
  }
  const int d = options.d > 0 ? options.d : kernel_rank(spec);
  std::vector<ConsistencyPoint> out;
  for (int n : options.sizes) {
    ConsistencyPoint pt;
    pt.n = n;
    NoiseFreeCache cache;
    for (int r = 0; r < options.reps; ++r) {
      const std::uint64_t seed = hash_key(options.seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(r));
      const DsbmSample s = sample_dsbm(spec, n, seed);
      const NoiseFreeEmbedding& nf = cache.get(s, d, options.svd);
      TruncatedSvd svd;
      if (options.noise_free) {
        svd = nf.svd;
      } else {
        svd = truncated_svd(unfold(s.graphs), d, seed, options.svd);
      }
      const Matrix w = procrustes(stack(svd.U, svd.V), stack(nf.svd.U, nf.svd.V)).Q;
      const Matrix yhat = svd.V * svd.S.cwiseSqrt().asDiagonal() * w;
      const Matrix ytil = nf.svd.V * nf.svd.S.cwiseSqrt().asDiagonal();
      const double err = (yhat - ytil).rowwise().norm().maxCoeff();
      const double scale = ytil.rowwise().norm().maxCoeff();
      pt.max_error.push_back(err);
      pt.relative_error.push_back(scale > 0.0 ? err / scale : 0.0);
    }
    pt.median_error = median(pt.max_error);
    pt.median_relative = median(pt.relative_error);
    out.push_back(std::move(pt));
  }
  return out;
}

CltResult clt_check(const DsbmSpec& spec, const CltOptions& options) {
  spec.validate();
  if (spec.degree != DegreeModel::None) throw InvalidArgument("clt_check: needs a finite-support spec without degree correction");
  const FiniteKernel kernel = finite_kernel(spec);
  const GroupRef target = options.target;
  if (target.t < 0 || target.t >= spec.T || target.atom < 0 || target.atom >= spec.K) {
    throw InvalidArgument("clt_check: target group outside the support");
  }
  const MrdpgParams params = construct_mrdpg(kernel);
  const MomentMatrices moments = compute_moments(params);
  const int d = params.d;

  std::vector<GroupRef> groups{target};
  if (!options.partners.empty()) {
    groups.insert(groups.end(), options.partners.begin(), options.partners.end());
  } else if (options.find_partners) {
    for (const auto& [a, b] : exchangeable_pairs(kernel, false)) {
      if (a == target) groups.push_back(b);
      if (b == target) groups.push_back(a);
    }
  }
  std::vector<std::vector<Vector>> pooled(groups.size());
  NoiseFreeCache cache;
  const double root_n = std::sqrt(static_cast<double>(options.n));
  for (int r = 0; r < options.reps; ++r) {
    const std::uint64_t seed = hash_key(options.seed, static_cast<std::uint64_t>(options.n), static_cast<std::uint64_t>(r));
    const DsbmSample s = sample_dsbm(spec, options.n, seed);
    const NoiseFreeEmbedding& nf = cache.get(s, d, options.svd);
    const TruncatedSvd svd = truncated_svd(unfold(s.graphs), d, seed, options.svd);
    const Matrix w_tilde = procrustes(stack(svd.U, svd.V), stack(nf.svd.U, nf.svd.V)).Q;
    // X = X_P L with X the true left positions; W aligns L with its limit.
    const Matrix x = left_positions(params, s.latent.sequence);
    const Matrix l = (x.transpose() * x).ldlt().solve(x.transpose() * nf.X);
    const Matrix w = procrustes(l, moments.L_tilde).Q;
    const Matrix yhat = svd.V * svd.S.cwiseSqrt().asDiagonal();
    const Matrix ytil = nf.svd.V * nf.svd.S.cwiseSqrt().asDiagonal();
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const Eigen::Index off = static_cast<Eigen::Index>(groups[g].t) * options.n;
      for (int i = 0; i < options.n; ++i) {
        if (s.latent.community(i, groups[g].t) != groups[g].atom) continue;
        const Vector res = root_n * ((yhat.row(off + i) * w_tilde - ytil.row(off + i)) * w).transpose();
        pooled[g].push_back(res);
      }
    }
  }

  auto covariance = [d](const std::vector<Vector>& pts, Vector& mean) {
    mean = Vector::Zero(d);
    for (const auto& p : pts) mean += p;
    mean /= static_cast<double>(pts.size());
    Matrix c = Matrix::Zero(d, d);
    for (const auto& p : pts) c += (p - mean) * (p - mean).transpose();
    return Matrix(c / static_cast<double>(pts.size() - 1));
  };

  CltResult out;
  if (pooled[0].size() < 2) throw DataError("clt_check: target group is empty");
  out.pooled = static_cast<int>(pooled[0].size());
  out.empirical_covariance = covariance(pooled[0], out.mean);
  const ErrorCovariance th = theoretical_error_covariance(params, moments, target.atom, target.t, options.regime);
  out.theory_covariance = th.covariance;
  out.regime_mismatch = th.regime_mismatch;
  out.theory_gap_frame = (out.empirical_covariance - th.covariance).norm() / th.covariance.norm();
  {
    Eigen::SelfAdjointEigenSolver<Matrix> e1(out.empirical_covariance, Eigen::EigenvaluesOnly);
    Eigen::SelfAdjointEigenSolver<Matrix> e2(th.covariance, Eigen::EigenvaluesOnly);
    out.theory_gap_aligned = (e1.eigenvalues() - e2.eigenvalues()).norm() / th.covariance.norm();
  }
  out.mean_bound = 3.0 * std::sqrt(out.empirical_covariance.trace() / out.pooled);
  out.mean_ok = out.mean.norm() < out.mean_bound;
  out.skewness = Vector::Zero(d);
  out.excess_kurtosis = Vector::Zero(d);
  for (int j = 0; j < d; ++j) {
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (const auto& p : pooled[0]) {
      const double z = p(j) - out.mean(j);
      m2 += z * z;
      m3 += z * z * z;
      m4 += z * z * z * z;
    }
    m2 /= out.pooled;
    m3 /= out.pooled;
    m4 /= out.pooled;
    out.skewness(j) = m3 / std::pow(m2, 1.5);
    out.excess_kurtosis(j) = m4 / (m2 * m2) - 3.0;
  }
  for (std::size_t g = 1; g < groups.size(); ++g) {
    if (pooled[g].size() < 2) continue;
    CltPartner p;
    p.group = groups[g];
    p.pooled = static_cast<int>(pooled[g].size());
    Vector mean;
    p.covariance = covariance(pooled[g], mean);
    p.gap = relative_frobenius(out.empirical_covariance, p.covariance);
    out.partners.push_back(std::move(p));
  }
  return out;
}

}  // namespace dynembed
