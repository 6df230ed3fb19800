#include "dynembed/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dynembed/rng.hpp"

namespace dynembed {

namespace {

constexpr std::uint64_t kMembershipStream = 0x4d454d42ULL;
constexpr std::uint64_t kWeightStream = 0x57454947ULL;
constexpr std::uint64_t kEdgeStream = 0x45444745ULL;

std::vector<int> balanced_counts(const std::vector<double>& probs, int n) {
  std::vector<int> counts(probs.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  int assigned = 0;
  for (std::size_t s = 0; s < probs.size(); ++s) {
    const double exact = probs[s] * n;
    counts[s] = static_cast<int>(std::floor(exact));
    assigned += counts[s];
    remainders.emplace_back(exact - counts[s], s);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[remainders[k % remainders.size()].second];
  return counts;
}

}  // namespace

void DsbmSpec::validate() const {
  if (K < 1 || T < 1) throw ParameterError("DSBM needs K >= 1 and T >= 1");
  if (static_cast<int>(B.size()) != T) throw ParameterError("DSBM needs one B matrix per time step");
  for (int t = 0; t < T; ++t) {
    const Matrix& b = B[static_cast<std::size_t>(t)];
    const std::string name = "B" + std::to_string(t + 1);
    if (b.rows() != K || b.cols() != K) throw ParameterError(name + " must be K x K");
    if ((b - b.transpose()).cwiseAbs().maxCoeff() > 0.0) throw ParameterError(name + " must be symmetric");
    if (b.minCoeff() < 0.0 || b.maxCoeff() > 1.0) throw ParameterError(name + " entries must lie in [0, 1]");
  }
  if (sequences.empty() || sequences.size() != probabilities.size()) {
    throw ParameterError("membership needs one probability per community sequence");
  }
  double total = 0.0;
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    if (static_cast<int>(sequences[s].size()) != T) throw ParameterError("community sequence length != T");
    for (int c : sequences[s]) {
      if (c < 0 || c >= K) throw ParameterError("community index out of range in sequence");
    }
    if (probabilities[s] < 0.0) throw ParameterError("negative sequence probability");
    total += probabilities[s];
  }
  if (std::abs(total - 1.0) > 1e-9) throw ParameterError("sequence probabilities must sum to 1");
  if (!(rho > 0.0 && rho <= 1.0)) throw ParameterError("rho must lie in (0, 1]");
  if (degree == DegreeModel::Uniform && !(weight_low > 0.0 && weight_low < 1.0)) {
    throw ParameterError("weight_low must lie in (0, 1)");
  }
  if (degree == DegreeModel::Explicit) {
    if (weights.empty()) throw ParameterError("explicit degree weights missing");
    for (double w : weights) {
      if (!(w > 0.0 && w <= 1.0)) throw ParameterError("degree weights must lie in (0, 1]");
    }
  }
}

DsbmSpec DsbmSpec::from_config(const KeyValueConfig& cfg) {
  DsbmSpec spec;
  spec.K = static_cast<int>(cfg.get_int("K"));
  spec.T = static_cast<int>(cfg.get_int("T"));
  for (int t = 1; t <= spec.T; ++t) spec.B.push_back(cfg.get_matrix("B" + std::to_string(t)));
  if (cfg.has("sequences")) {
    for (const auto& row : cfg.get_int_rows("sequences")) {
      std::vector<int> seq;
      for (long long c : row) seq.push_back(static_cast<int>(c) - 1);
      spec.sequences.push_back(std::move(seq));
    }
  } else {
    for (int k = 0; k < spec.K; ++k) spec.sequences.emplace_back(static_cast<std::size_t>(spec.T), k);
  }
  if (cfg.has("probabilities")) {
    spec.probabilities = cfg.get_list("probabilities");
  } else {
    spec.probabilities.assign(spec.sequences.size(), 1.0 / static_cast<double>(spec.sequences.size()));
  }
  const std::string assignment = cfg.get_or("assignment", "balanced");
  if (assignment == "balanced") {
    spec.assignment = Assignment::Balanced;
  } else if (assignment == "random") {
    spec.assignment = Assignment::Random;
  } else {
    throw ParameterError(cfg.source() + ": assignment must be 'balanced' or 'random'");
  }
  const std::string degree = cfg.get_or("degree", "none");
  if (degree == "none") {
    spec.degree = DegreeModel::None;
  } else if (degree == "uniform") {
    spec.degree = DegreeModel::Uniform;
  } else if (degree == "explicit") {
    spec.degree = DegreeModel::Explicit;
    spec.weights = cfg.get_list("weights");
  } else {
    throw ParameterError(cfg.source() + ": degree must be none, uniform or explicit");
  }
  spec.weight_low = cfg.get_double_or("weight_low", 0.3);
  spec.rho = cfg.get_double_or("rho", 1.0);
  spec.default_n = static_cast<int>(cfg.get_int_or("n", 0));
  spec.default_seed = static_cast<std::uint64_t>(cfg.get_int_or("seed", 0));
  spec.validate();
  return spec;
}

DsbmSpec DsbmSpec::load(const std::filesystem::path& path) { return from_config(KeyValueConfig::load(path)); }

LatentSeries draw_latent(const DsbmSpec& spec, int n, std::uint64_t seed) {
  spec.validate();
  if (n < 1) throw InvalidArgument("node count must be positive");
  LatentSeries z;
  z.community.resize(n, spec.T);
  z.weight = Vector::Ones(n);
  z.sequence.assign(static_cast<std::size_t>(n), 0);

  if (spec.assignment == Assignment::Balanced) {
    const auto counts = balanced_counts(spec.probabilities, n);
    int node = 0;
    for (std::size_t s = 0; s < counts.size(); ++s) {
      for (int c = 0; c < counts[s]; ++c) z.sequence[static_cast<std::size_t>(node++)] = static_cast<int>(s);
    }
  } else {
    std::vector<double> cdf(spec.probabilities.size());
    std::partial_sum(spec.probabilities.begin(), spec.probabilities.end(), cdf.begin());
    for (int i = 0; i < n; ++i) {
      const double u = uniform01(seed, kMembershipStream, static_cast<std::uint64_t>(i)) * cdf.back();
      const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
      z.sequence[static_cast<std::size_t>(i)] =
          static_cast<int>(std::min<std::ptrdiff_t>(it - cdf.begin(), static_cast<std::ptrdiff_t>(cdf.size()) - 1));
    }
  }
  for (int i = 0; i < n; ++i) {
    const auto& seq = spec.sequences[static_cast<std::size_t>(z.sequence[static_cast<std::size_t>(i)])];
    for (int t = 0; t < spec.T; ++t) z.community(i, t) = seq[static_cast<std::size_t>(t)];
  }

  switch (spec.degree) {
    case DegreeModel::None:
      break;
    case DegreeModel::Uniform:
      for (int i = 0; i < n; ++i) {
        z.weight(i) = 1.0 - (1.0 - spec.weight_low) * uniform01(seed, kWeightStream, static_cast<std::uint64_t>(i));
      }
      break;
    case DegreeModel::Explicit:
      if (static_cast<int>(spec.weights.size()) != n) throw ParameterError("explicit weights length != n");
      for (int i = 0; i < n; ++i) z.weight(i) = spec.weights[static_cast<std::size_t>(i)];
      break;
  }
  return z;
}

std::vector<Matrix> gram_matrices(const DsbmSpec& spec, const LatentSeries& z) {
  spec.validate();
  if (z.num_times() != spec.T) throw InvalidArgument("latent series has wrong number of time steps");
  const int n = z.num_nodes();
  if (z.weight.size() != n) throw InvalidArgument("latent series weight length != n");
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(spec.T));
  for (int t = 0; t < spec.T; ++t) {
    Matrix c = Matrix::Zero(n, spec.K);
    for (int i = 0; i < n; ++i) {
      const int k = z.community(i, t);
      if (k < 0 || k >= spec.K) throw InvalidArgument("community index out of range");
      c(i, k) = z.weight(i);
    }
    Matrix p = spec.rho * (c * spec.B[static_cast<std::size_t>(t)] * c.transpose());
    if (p.maxCoeff() > 1.0) {
      throw ParameterError("edge probability exceeds 1 at time " + std::to_string(t + 1) +
                           " after sparsity and degree scaling");
    }
    out.push_back(std::move(p));
  }
  return out;
}

GraphSeries sample_adjacency(std::span<const Matrix> gram, std::uint64_t seed) {
  if (gram.empty()) throw InvalidArgument("sample_adjacency: empty Gram sequence");
  const auto n = static_cast<int>(gram.front().rows());
  std::vector<std::vector<std::pair<int, int>>> edges(gram.size());
  for (std::size_t t = 0; t < gram.size(); ++t) {
    const Matrix& p = gram[t];
    if (p.rows() != n || p.cols() != n) throw InvalidArgument("sample_adjacency: Gram matrices must be n x n");
    if (p.minCoeff() < 0.0 || p.maxCoeff() > 1.0) throw InvalidArgument("sample_adjacency: entries outside [0, 1]");
    auto& list = edges[t];
    for (int j = 1; j < n; ++j) {
      for (int i = 0; i < j; ++i) {
        const double pij = p(i, j);
        if (pij <= 0.0) continue;
        if (pij >= 1.0 || uniform01(seed, kEdgeStream, t, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)) < pij) {
          list.emplace_back(i, j);
        }
      }
    }
  }
  return GraphSeries::from_edges(n, edges);
}

DsbmSample sample_dsbm(const DsbmSpec& spec, int n, std::uint64_t seed) {
  if (n < spec.K) throw InvalidArgument("sample_dsbm: need n >= K");
  DsbmSample out;
  out.latent = draw_latent(spec, n, seed);
  out.gram = gram_matrices(spec, out.latent);
  out.graphs = sample_adjacency(out.gram, seed);
  return out;
}

DsbmSpec four_community_merge_spec() {
  DsbmSpec spec;
  spec.K = 4;
  spec.T = 2;
  Matrix b1(4, 4), b2(4, 4);
  b1 << 0.08, 0.02, 0.18, 0.10,
        0.02, 0.20, 0.04, 0.10,
        0.18, 0.04, 0.02, 0.02,
        0.10, 0.10, 0.02, 0.06;
  b2 << 0.16, 0.16, 0.04, 0.10,
        0.16, 0.16, 0.04, 0.10,
        0.04, 0.04, 0.09, 0.02,
        0.10, 0.10, 0.02, 0.06;
  spec.B = {b1, b2};
  spec.sequences = {{0, 0}, {1, 1}, {2, 2}, {3, 3}};
  spec.probabilities = {0.25, 0.25, 0.25, 0.25};
  spec.assignment = Assignment::Balanced;
  spec.default_n = 1000;
  return spec;
}

}  // namespace dynembed
