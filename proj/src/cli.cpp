#include "dynembed/cli.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dynembed/cluster.hpp"
#include "dynembed/config.hpp"
#include "dynembed/embedders.hpp"
#include "dynembed/io.hpp"
#include "dynembed/models.hpp"
#include "dynembed/mrdpg.hpp"
#include "dynembed/netseries.hpp"
#include "dynembed/stability.hpp"

#ifndef DYNEMBED_VERSION
#define DYNEMBED_VERSION "0.0.0"
#endif

namespace dynembed {

namespace fs = std::filesystem;

std::string version_string() { return DYNEMBED_VERSION; }

namespace {

using Clock = std::chrono::steady_clock;

// Raised when a requested statistical check fails.
class ThresholdFailure : public Error {
 public:
  using Error::Error;
};

class RunManifest {
 public:
  RunManifest(std::string command, const fs::path& out) : out_(out), start_(Clock::now()) {
    json_["command"] = std::move(command);
    json_["versions"] = {{"dynembed", version_string()},
                         {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                       std::to_string(EIGEN_MINOR_VERSION)},
                         {"compiler", __VERSION__}};
    json_["inputs"] = nlohmann::json::array();
    json_["timings"] = nlohmann::json::object();
  }

  void set(const std::string& key, nlohmann::json value) { json_[key] = std::move(value); }
  void seed(std::uint64_t s) { json_["seed"] = s; }
  void config(const std::string& canonical) { json_["config_hash"] = sha256_hex(canonical); }

  void input(const fs::path& p) {
    std::string digest;
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(p)) {
        if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      std::string cat;
      for (const auto& f : files) cat += f.filename().string() + ":" + sha256_file(f) + "\n";
      digest = sha256_hex(cat);
    } else {
      digest = sha256_file(p);
    }
    json_["inputs"].push_back({{"path", p.string()}, {"sha256", digest}});
  }

  void lap(const std::string& phase) {
    const auto now = Clock::now();
    json_["timings"][phase] = std::chrono::duration<double>(now - last_).count();
    last_ = now;
  }

  void add_outputs(const std::vector<std::string>& files) { outputs_.insert(outputs_.end(), files.begin(), files.end()); }

  void write() {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& f : outputs_) list.push_back({{"file", f}, {"sha256", sha256_file(out_ / f)}});
    json_["outputs"] = list;
    json_["timings"]["total"] = std::chrono::duration<double>(Clock::now() - start_).count();
    std::ofstream o(out_ / "manifest.json");
    if (!o) throw DataError("cannot write " + (out_ / "manifest.json").string());
    o << json_.dump(2) << '\n';
  }

 private:
  fs::path out_;
  nlohmann::json json_;
  std::vector<std::string> outputs_;
  Clock::time_point start_;
  Clock::time_point last_ = Clock::now();
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, sep)) out.push_back(part);
  return out;
}

int to_int(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw InvalidArgument(what + ": '" + s + "' is not an integer");
}

double to_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw InvalidArgument(what + ": '" + s + "' is not a number");
}

// "2:8", "20:50:5" or "2,3,4".
std::vector<int> parse_grid(const std::string& s) {
  std::vector<int> out;
  const auto parts = split(s, ':');
  if (parts.size() == 2 || parts.size() == 3) {
    const int lo = to_int(parts[0], "--grid");
    const int hi = to_int(parts[1], "--grid");
    const int step = parts.size() == 3 ? to_int(parts[2], "--grid") : 1;
    if (step < 1 || hi < lo) throw InvalidArgument("--grid: bad range '" + s + "'");
    for (int g = lo; g <= hi; g += step) out.push_back(g);
  } else {
    for (const auto& p : split(s, ',')) out.push_back(to_int(p, "--grid"));
  }
  if (out.empty() || *std::min_element(out.begin(), out.end()) < 1) throw InvalidArgument("--grid: need positive values");
  return out;
}

// "4@1:4@2,1@2:2@2" with 1-based community and time.
std::vector<GroupPair> parse_pairs(const std::string& s) {
  auto group = [&](const std::string& g) {
    const auto at = split(g, '@');
    if (at.size() != 2) throw InvalidArgument("--pairs: expected community@time, got '" + g + "'");
    return GroupRef{to_int(at[0], "--pairs") - 1, to_int(at[1], "--pairs") - 1};
  };
  std::vector<GroupPair> out;
  for (const auto& p : split(s, ',')) {
    const auto ab = split(p, ':');
    if (ab.size() != 2) throw InvalidArgument("--pairs: expected a@t:b@t, got '" + p + "'");
    out.emplace_back(group(ab[0]), group(ab[1]));
  }
  return out;
}

// constant[:W], exponential:lambda[:W], sliding:W, custom:w0,w1,...
TemporalWeights parse_weights(const std::string& s) {
  const auto parts = split(s, ':');
  const std::string& kind = parts.at(0);
  if (kind == "constant" && parts.size() <= 2) {
    return TemporalWeights::constant(parts.size() == 2 ? to_int(parts[1], "--weights") : 0);
  }
  if (kind == "exponential" && (parts.size() == 2 || parts.size() == 3)) {
    return TemporalWeights::exponential(to_double(parts[1], "--weights"),
                                        parts.size() == 3 ? to_int(parts[2], "--weights") : 0);
  }
  if (kind == "sliding" && parts.size() == 2) return TemporalWeights::sliding(to_int(parts[1], "--weights"));
  if (kind == "custom" && parts.size() == 2) {
    std::vector<double> w;
    for (const auto& x : split(parts[1], ',')) w.push_back(to_double(x, "--weights"));
    return TemporalWeights::from_values(std::move(w));
  }
  throw InvalidArgument("--weights: unrecognised '" + s + "'");
}

SvdOptions parse_svd(const std::string& s) {
  SvdOptions o;
  if (s == "auto") {
    o.method = SvdMethod::Auto;
  } else if (s == "dense") {
    o.method = SvdMethod::Dense;
  } else if (s == "randomized") {
    o.method = SvdMethod::Randomized;
  } else {
    throw InvalidArgument("--svd must be auto, dense or randomized");
  }
  return o;
}

std::string canonical_args(const std::map<std::string, std::string>& kv) {
  std::string s;
  for (const auto& [k, v] : kv) s += k + "=" + v + "\n";
  return s;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool has_seed = false;
  int n = 0;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out) {
  DsbmSpec spec = DsbmSpec::load(a.config);
  const std::uint64_t seed = a.has_seed ? a.seed : spec.default_seed;
  const int n = a.n > 0 ? a.n : spec.default_n;
  if (n < 1) throw DataError(a.config + ": no node count; set 'n' in the config or pass --n");
  spec.default_seed = seed;
  spec.default_n = n;
  fs::create_directories(a.out);
  RunManifest m("simulate", a.out);
  m.input(a.config);
  m.seed(seed);
  const std::string cfg = spec_to_config(spec);
  m.config(cfg);
  const DsbmSample s = sample_dsbm(spec, n, seed);
  m.lap("sample");
  write_series(s.graphs, a.out);
  write_latent(s.latent, fs::path(a.out) / "latent.csv");
  {
    std::ofstream o(fs::path(a.out) / "spec.cfg");
    o << cfg;
  }
  std::vector<std::string> files{"series.json", "latent.csv", "spec.cfg"};
  for (int t = 1; t <= s.graphs.num_times(); ++t) files.push_back("snapshot_" + std::to_string(t) + ".csv");
  m.add_outputs(files);
  m.lap("write");
  m.write();
  out << "simulated n=" << n << " T=" << s.graphs.num_times() << " seed=" << seed << " edges:";
  for (int t = 0; t < s.graphs.num_times(); ++t) out << ' ' << s.graphs.edge_count(t);
  out << '\n';
  return kExitOk;
}

struct IngestArgs {
  std::string input;
  std::string out;
  std::int64_t window = 3600;
  std::vector<std::string> ranges;
  std::string columns = "time-first";
  std::string node_order = "first";
  bool keep_self_loops = false;
};

int cmd_ingest(const IngestArgs& a, std::ostream& out) {
  IngestOptions o;
  o.window_seconds = a.window;
  for (const auto& r : a.ranges) {
    const auto p = split(r, ':');
    if (p.size() != 2) throw InvalidArgument("--range expects start:end, got '" + r + "'");
    o.ranges.push_back({std::stoll(p[0]), std::stoll(p[1])});
  }
  if (a.columns == "time-first") {
    o.columns = ColumnOrder::TimeFirst;
  } else if (a.columns == "time-last") {
    o.columns = ColumnOrder::TimeLast;
  } else {
    throw InvalidArgument("--columns must be time-first or time-last");
  }
  if (a.node_order == "first") {
    o.node_order = NodeOrder::FirstAppearance;
  } else if (a.node_order == "sorted") {
    o.node_order = NodeOrder::Sorted;
  } else {
    throw InvalidArgument("--node-order must be first or sorted");
  }
  o.drop_self_loops = !a.keep_self_loops;
  fs::create_directories(a.out);
  RunManifest m("ingest", a.out);
  m.input(a.input);
  std::map<std::string, std::string> kv{{"window", std::to_string(a.window)}, {"columns", a.columns},
                                        {"node_order", a.node_order}};
  for (std::size_t i = 0; i < a.ranges.size(); ++i) kv["range" + std::to_string(i)] = a.ranges[i];
  m.config(canonical_args(kv));
  const IngestResult r = ingest_edge_list(a.input, o);
  m.lap("ingest");
  write_series(r.series, a.out);
  {
    std::ofstream f(fs::path(a.out) / "node_map.csv");
    f << "index,label\n";
    for (std::size_t i = 0; i < r.series.node_labels().size(); ++i) f << i << ',' << csv_field(r.series.node_labels()[i]) << '\n';
  }
  std::vector<std::string> files{"series.json", "node_map.csv"};
  for (int t = 1; t <= r.series.num_times(); ++t) files.push_back("snapshot_" + std::to_string(t) + ".csv");
  m.add_outputs(files);
  m.set("events", {{"read", r.events_read}, {"out_of_range", r.events_out_of_range}, {"self_loops_dropped", r.self_loops_dropped}});
  m.write();
  out << "ingested " << r.events_read << " events: n=" << r.series.num_nodes() << " T=" << r.series.num_times()
      << " out_of_range=" << r.events_out_of_range << " self_loops_dropped=" << r.self_loops_dropped << '\n';
  return kExitOk;
}

struct EmbedArgs {
  std::string input;
  std::string out;
  std::string method = "uase";
  std::string dim = "auto";
  int max_dim = 0;
  std::string weights = "exponential:0.5";
  std::string svd = "auto";
  std::uint64_t seed = 0;
  bool matrix_free = false;
};

int cmd_embed(const EmbedArgs& a, std::ostream& out) {
  const EmbedMethod method = parse_method(a.method);
  const SvdOptions svd = parse_svd(a.svd);
  fs::create_directories(a.out);
  RunManifest m("embed", a.out);
  m.input(a.input);
  m.seed(a.seed);
  m.config(canonical_args({{"method", a.method}, {"dim", a.dim}, {"max_dim", std::to_string(a.max_dim)},
                           {"weights", a.weights}, {"svd", a.svd}, {"matrix_free", a.matrix_free ? "1" : "0"}}));
  const GraphSeries g = read_series(a.input);
  m.lap("read");
  const int T = g.num_times();

  std::vector<int> dims;
  std::vector<DimensionSelection> selections;
  const TemporalWeights weights = parse_weights(a.weights);
  if (a.dim == "auto") {
    switch (method) {
      case EmbedMethod::Uase:
        selections.push_back(select_dimension(unfold(g), a.max_dim, a.seed, svd));
        break;
      case EmbedMethod::Omnibus:
        selections.push_back(select_dimension(omnibus_matrix(g), a.max_dim, a.seed, svd));
        break;
      case EmbedMethod::Independent:
        for (int t = 0; t < T; ++t) selections.push_back(select_dimension(g.adjacency(t), a.max_dim, a.seed, svd));
        break;
      case EmbedMethod::Separate: {
        std::vector<SparseMatrix> avg;
        for (int t = 0; t < T; ++t) avg.push_back(temporal_average(g, t, weights));
        SparseMatrix cat(g.num_nodes(), static_cast<Eigen::Index>(g.num_nodes()) * T);
        std::vector<Triplet> trip;
        for (int t = 0; t < T; ++t) {
          for (int c = 0; c < avg[static_cast<std::size_t>(t)].outerSize(); ++c) {
            for (SparseMatrix::InnerIterator it(avg[static_cast<std::size_t>(t)], c); it; ++it) {
              trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()) + t * g.num_nodes(), it.value());
            }
          }
        }
        cat.setFromTriplets(trip.begin(), trip.end());
        selections.push_back(select_dimension(cat, a.max_dim, a.seed, svd));
        break;
      }
    }
    for (const auto& s : selections) dims.push_back(s.d_hat);
    m.lap("select_dimension");
  } else {
    for (const auto& p : split(a.dim, ',')) dims.push_back(to_int(p, "--dim"));
  }
  if (method != EmbedMethod::Independent && dims.size() != 1) {
    throw InvalidArgument("--dim takes a single value for method " + a.method);
  }
  if (method == EmbedMethod::Independent && dims.size() == 1) dims.assign(static_cast<std::size_t>(T), dims.front());
  if (method == EmbedMethod::Independent && static_cast<int>(dims.size()) != T) {
    throw InvalidArgument("--dim for independent takes one value or one per time step");
  }

  Embedding e;
  switch (method) {
    case EmbedMethod::Uase: e = uase(g, dims.front(), a.seed, svd); break;
    case EmbedMethod::Omnibus: {
      OmnibusOptions o;
      o.allow_matrix_free = a.matrix_free;
      o.svd = svd;
      e = omnibus(g, dims.front(), a.seed, o);
      break;
    }
    case EmbedMethod::Independent: e = independent_ase(g, dims, a.seed, svd); break;
    case EmbedMethod::Separate: e = separate_embed(g, weights, dims.front(), a.seed, svd); break;
  }
  m.lap("embed");
  auto files = write_embedding(e, a.out);
  {
    std::ofstream f(fs::path(a.out) / "scree.csv");
    f << "decomposition,index,singular_value\n";
    for (std::size_t k = 0; k < e.singular_values.size(); ++k) {
      for (Eigen::Index i = 0; i < e.singular_values[k].size(); ++i) {
        f << k + 1 << ',' << i + 1 << ',' << format_double(e.singular_values[k](i)) << '\n';
      }
    }
    files.push_back("scree.csv");
  }
  if (!selections.empty()) {
    std::ofstream f(fs::path(a.out) / "profile_likelihood.csv");
    f << "decomposition,q,singular_value,profile_loglik\n";
    for (std::size_t k = 0; k < selections.size(); ++k) {
      const auto& s = selections[k];
      for (Eigen::Index q = 0; q < s.singular_values.size(); ++q) {
        f << k + 1 << ',' << q + 1 << ',' << format_double(s.singular_values(q)) << ','
          << (q < s.profile.size() ? format_double(s.profile(q)) : std::string("NA")) << '\n';
      }
    }
    files.push_back("profile_likelihood.csv");
  }
  m.add_outputs(files);
  m.set("method", a.method);
  m.set("dims", e.dims);
  std::vector<std::vector<double>> sv;
  for (const auto& s : e.singular_values) sv.emplace_back(s.data(), s.data() + s.size());
  m.set("singular_values", sv);
  m.set("warnings", e.warnings);
  m.write();
  out << "embedded with " << a.method << " dims=";
  for (std::size_t i = 0; i < e.dims.size(); ++i) out << (i ? "," : "") << e.dims[i];
  out << " n=" << e.num_nodes() << " T=" << e.num_times() << '\n';
  for (const auto& w : e.warnings) out << "warning: " << w << '\n';
  return kExitOk;
}

struct StabilityArgs {
  std::string embedding;
  std::string truth;
  std::string out;
  std::string pairs;
  double threshold = 0.1;
};

int cmd_stability(const StabilityArgs& a, std::ostream& out) {
  fs::create_directories(a.out);
  RunManifest m("stability", a.out);
  m.input(a.embedding);
  m.input(a.truth);
  m.config(canonical_args({{"pairs", a.pairs}, {"threshold", format_double(a.threshold)}}));
  const Embedding e = read_embedding(a.embedding);
  const DsbmSpec spec = DsbmSpec::load(fs::path(a.truth) / "spec.cfg");
  const LatentSeries z = read_latent(fs::path(a.truth) / "latent.csv");
  if (z.num_nodes() != e.num_nodes()) {
    throw DataError("truth has " + std::to_string(z.num_nodes()) + " nodes but the embedding has " +
                    std::to_string(e.num_nodes()));
  }
  StabilityOptions o;
  o.threshold = a.threshold;
  if (!a.pairs.empty()) o.pairs = parse_pairs(a.pairs);
  const StabilityReport r = stability_report(e, stability_truth(spec, z), o);
  m.lap("report");
  write_report_csv(r, fs::path(a.out) / "stability.csv");
  const std::string table = format_report(r);
  {
    std::ofstream f(fs::path(a.out) / "stability.txt");
    f << table;
  }
  m.add_outputs({"stability.csv", "stability.txt"});
  m.set("all_pass", r.all_pass());
  m.write();
  out << table;
  if (!r.all_pass()) throw ThresholdFailure("at least one pair failed the gap-ratio threshold");
  return kExitOk;
}

struct ClusterArgs {
  std::string embedding;
  std::string out;
  std::string grid = "1:8";
  std::string coords = "spherical";
  std::string angles = "positive";
  std::string classes;
  int restarts = 10;
  std::uint64_t seed = 0;
};

int cmd_cluster(const ClusterArgs& a, std::ostream& out) {
  fs::create_directories(a.out);
  RunManifest m("cluster", a.out);
  m.input(a.embedding);
  if (!a.classes.empty()) m.input(a.classes);
  m.seed(a.seed);
  m.config(canonical_args({{"grid", a.grid}, {"coords", a.coords}, {"angles", a.angles},
                           {"restarts", std::to_string(a.restarts)}}));
  const Embedding e = read_embedding(a.embedding);
  PooledPoints pooled;
  if (a.coords == "spherical") {
    AngleRange range;
    if (a.angles == "positive") {
      range = AngleRange::ZeroToTwoPi;
    } else if (a.angles == "signed") {
      range = AngleRange::Signed;
    } else {
      throw InvalidArgument("--angles must be positive or signed");
    }
    pooled = pool_spherical(e, range);
  } else if (a.coords == "raw") {
    pooled = pool_raw(e);
  } else {
    throw InvalidArgument("--coords must be spherical or raw");
  }
  GmmOptions o;
  o.grid = parse_grid(a.grid);
  o.restarts = a.restarts;
  o.seed = a.seed;
  const GmmSelection sel = fit_gmm_bic(pooled.points, o);
  const ClusterAssignment asg = assign(sel.best, pooled.points);
  m.lap("fit");

  std::vector<std::string> node_class;
  if (!a.classes.empty()) {
    // node_label,class
    std::map<std::string, std::string> by_label;
    std::ifstream f(a.classes);
    if (!f) throw DataError("cannot open " + a.classes);
    std::string line;
    std::getline(f, line);
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      const auto c = split_csv_line(line);
      if (c.size() < 2) throw DataError(a.classes + ": expected node_label,class");
      by_label[c[0]] = c[1];
    }
    for (const auto& l : e.node_labels) {
      const auto it = by_label.find(l);
      node_class.push_back(it == by_label.end() ? std::string("unknown") : it->second);
    }
  }
  {
    std::ofstream f(fs::path(a.out) / "assignments.csv");
    f << "node_label,time_label,cluster,max_posterior\n";
    for (std::size_t r = 0; r < pooled.index.size(); ++r) {
      const auto [node, t] = pooled.index[r];
      f << csv_field(e.node_labels[static_cast<std::size_t>(node)]) << ',' << csv_field(e.time_labels[static_cast<std::size_t>(t)])
        << ',' << asg.labels[r] + 1 << ',' << format_double(asg.max_posterior(static_cast<Eigen::Index>(r))) << '\n';
    }
  }
  {
    std::ofstream f(fs::path(a.out) / "bic.csv");
    f << "G,bic\n";
    for (const auto& [G, bic] : sel.bic_table) f << G << ',' << format_double(bic) << '\n';
  }
  {
    std::ofstream f(fs::path(a.out) / "proportions.csv");
    f << "class,time_label,cluster,count,proportion\n";
    for (const auto& row : proportion_table(asg, pooled, e.num_times(), sel.best.G, node_class)) {
      f << csv_field(row.node_class) << ',' << csv_field(e.time_labels[static_cast<std::size_t>(row.t)]) << ','
        << row.cluster + 1 << ',' << row.count << ',' << format_double(row.proportion) << '\n';
    }
  }
  m.add_outputs({"assignments.csv", "bic.csv", "proportions.csv"});
  m.set("selected_G", sel.best.G);
  m.set("warnings", sel.warnings);
  m.write();
  out << "selected G=" << sel.best.G << " from " << pooled.points.rows() << " points\n";
  for (const auto& w : sel.warnings) out << "warning: " << w << '\n';
  return kExitOk;
}

struct TheoryArgs {
  std::string config;
  std::string out;
};

int cmd_theory(const TheoryArgs& a, std::ostream& out) {
  const DsbmSpec spec = DsbmSpec::load(a.config);
  fs::create_directories(a.out);
  RunManifest m("theory", a.out);
  m.input(a.config);
  m.config(spec_to_config(spec));
  const FiniteKernel k = finite_kernel(spec);
  const MrdpgParams p = construct_mrdpg(k);
  const MomentMatrices mom = compute_moments(p);
  write_mrdpg(p, a.out);
  std::vector<std::string> files{"mrdpg.json", "X_points.csv"};
  for (int t = 1; t <= spec.T; ++t) {
    files.push_back("Y_points_" + std::to_string(t) + ".csv");
    files.push_back("Lambda_" + std::to_string(t) + ".csv");
  }
  write_matrix_csv(fs::path(a.out) / "R_star.csv", mom.R_star);
  write_matrix_csv(fs::path(a.out) / "Sigma_tilde.csv", Matrix(mom.Sigma_tilde));
  files.insert(files.end(), {"R_star.csv", "Sigma_tilde.csv"});
  const Regime regime = spec.rho == 1.0 ? Regime::Dense : Regime::Sparse;
  {
    std::ofstream f(fs::path(a.out) / "covariances.csv");
    f << "community,time,row,col,value\n";
    for (int t = 0; t < spec.T; ++t) {
      for (int c = 0; c < spec.K; ++c) {
        const auto cov = theoretical_error_covariance(p, mom, c, t, regime).covariance;
        for (Eigen::Index i = 0; i < cov.rows(); ++i) {
          for (Eigen::Index j = 0; j < cov.cols(); ++j) {
            f << c + 1 << ',' << t + 1 << ',' << i + 1 << ',' << j + 1 << ',' << format_double(cov(i, j)) << '\n';
          }
        }
      }
    }
    files.push_back("covariances.csv");
  }
  {
    std::ofstream f(fs::path(a.out) / "exchangeable_pairs.csv");
    f << "community_a,time_a,community_b,time_b,class,alpha\n";
    for (const auto& [ga, gb] : exchangeable_pairs(k)) {
      const auto v = exchangeability_check(k, ga.atom, ga.t, gb.atom, gb.t);
      f << ga.atom + 1 << ',' << ga.t + 1 << ',' << gb.atom + 1 << ',' << gb.t + 1 << ',' << to_string(v.kind) << ','
        << format_double(v.kind == Exchangeability::UpToDegree ? v.alpha : 1.0) << '\n';
    }
    files.push_back("exchangeable_pairs.csv");
  }
  m.add_outputs(files);
  m.write();
  out << "d=" << p.d << " d_t=";
  for (std::size_t t = 0; t < p.dt.size(); ++t) out << (t ? "," : "") << p.dt[t];
  out << " signature=(" << p.p << "," << p.q << ") reconstruction_error=" << p.reconstruction_error << '\n';
  return kExitOk;
}

struct ConsistencyArgs {
  std::string config;
  std::string out;
  std::string sizes = "250,500,1000,2000";
  int reps = 10;
  std::uint64_t seed = 0;
};

int cmd_consistency(const ConsistencyArgs& a, std::ostream& out) {
  const DsbmSpec spec = DsbmSpec::load(a.config);
  fs::create_directories(a.out);
  RunManifest m("consistency", a.out);
  m.input(a.config);
  m.seed(a.seed);
  m.config(spec_to_config(spec) + canonical_args({{"sizes", a.sizes}, {"reps", std::to_string(a.reps)}}));
  ConsistencyOptions o;
  o.sizes.clear();
  for (const auto& s : split(a.sizes, ',')) o.sizes.push_back(to_int(s, "--sizes"));
  o.reps = a.reps;
  o.seed = a.seed;
  const auto curve = consistency_curve(spec, o);
  m.lap("curve");
  std::ofstream f(fs::path(a.out) / "consistency.csv");
  f << "n,replicate,max_error,relative_error\n";
  for (const auto& pt : curve) {
    for (std::size_t r = 0; r < pt.max_error.size(); ++r) {
      f << pt.n << ',' << r + 1 << ',' << format_double(pt.max_error[r]) << ',' << format_double(pt.relative_error[r]) << '\n';
    }
    out << "n=" << pt.n << " median max error " << pt.median_error << " (relative " << pt.median_relative << ")\n";
  }
  f.close();
  m.add_outputs({"consistency.csv"});
  m.write();
  return kExitOk;
}

struct CltArgs {
  std::string config;
  std::string out;
  std::string target = "1@1";
  int n = 2000;
  int reps = 20;
  std::uint64_t seed = 0;
};

int cmd_clt(const CltArgs& a, std::ostream& out) {
  const DsbmSpec spec = DsbmSpec::load(a.config);
  fs::create_directories(a.out);
  RunManifest m("clt", a.out);
  m.input(a.config);
  m.seed(a.seed);
  m.config(spec_to_config(spec) + canonical_args({{"target", a.target}, {"n", std::to_string(a.n)},
                                                  {"reps", std::to_string(a.reps)}}));
  const auto at = split(a.target, '@');
  if (at.size() != 2) throw InvalidArgument("--target expects community@time");
  CltOptions o;
  o.n = a.n;
  o.reps = a.reps;
  o.seed = a.seed;
  o.target = {to_int(at[0], "--target") - 1, to_int(at[1], "--target") - 1};
  const CltResult r = clt_check(spec, o);
  m.lap("clt");
  write_matrix_csv(fs::path(a.out) / "empirical_covariance.csv", r.empirical_covariance);
  write_matrix_csv(fs::path(a.out) / "theory_covariance.csv", r.theory_covariance);
  m.add_outputs({"empirical_covariance.csv", "theory_covariance.csv"});
  m.set("theory_gap_frame", r.theory_gap_frame);
  m.set("theory_gap_aligned", r.theory_gap_aligned);
  nlohmann::json partners = nlohmann::json::array();
  for (const auto& p : r.partners) {
    partners.push_back({{"community", p.group.atom + 1}, {"time", p.group.t + 1}, {"gap", p.gap}, {"pooled", p.pooled}});
  }
  m.set("partners", partners);
  m.write();
  out << "pooled " << r.pooled << " residuals; gap to theory " << r.theory_gap_frame << " (in frame), "
      << r.theory_gap_aligned << " (aligned)\n";
  for (const auto& p : r.partners) {
    out << "partner (" << p.group.atom + 1 << ", t=" << p.group.t + 1 << ") covariance gap " << p.gap << '\n';
  }
  return kExitOk;
}

int cmd_digest(const std::vector<std::string>& files, const std::string& expect, std::ostream& out) {
  if (!expect.empty() && files.size() != 1) throw InvalidArgument("--expect takes exactly one file");
  for (const auto& f : files) {
    const std::string h = sha256_file(f);
    out << h << "  " << f << '\n';
    if (!expect.empty() && h != expect) throw ThresholdFailure("digest mismatch for " + f + ": expected " + expect);
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stable spectral embedding of dynamic networks", "dynembed"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Sample a dynamic stochastic block model");
  s->add_option("--config", sim.config, "Model config file")->required();
  s->add_option("--out", sim.out, "Output directory")->required();
  auto* seed_opt = s->add_option("--seed", sim.seed, "Random seed (default: config 'seed')");
  s->add_option("--n", sim.n, "Node count (default: config 'n')");

  IngestArgs ing;
  auto* i = app.add_subcommand("ingest", "Bin a timestamped edge list into snapshots");
  i->add_option("--input", ing.input, "Edge-event file")->required();
  i->add_option("--out", ing.out, "Output directory")->required();
  i->add_option("--window-seconds", ing.window, "Window length in seconds")->check(CLI::PositiveNumber);
  i->add_option("--range", ing.ranges, "Half-open time range start:end; repeat for several");
  i->add_option("--columns", ing.columns, "time-first (time u v) or time-last (u v time)");
  i->add_option("--node-order", ing.node_order, "first (appearance) or sorted");
  i->add_flag("--keep-self-loops", ing.keep_self_loops, "Fail on self-events instead of dropping them");

  EmbedArgs emb;
  auto* e = app.add_subcommand("embed", "Embed a graph series");
  e->add_option("--input", emb.input, "Series directory")->required();
  e->add_option("--out", emb.out, "Output directory")->required();
  e->add_option("--method", emb.method, "uase, omnibus, independent or separate");
  e->add_option("--dim", emb.dim, "Dimension, 'auto', or per-time list for independent");
  e->add_option("--max-dim", emb.max_dim, "Singular values used by --dim auto (default min(n, 100))");
  e->add_option("--weights", emb.weights, "Separate embedding weights: constant[:W], exponential:l[:W], sliding:W, custom:w0,w1");
  e->add_option("--svd", emb.svd, "auto, dense or randomized");
  e->add_option("--seed", emb.seed, "Random seed");
  e->add_flag("--matrix-free", emb.matrix_free, "Omnibus: use block products when over the memory budget");

  StabilityArgs st;
  auto* t = app.add_subcommand("stability", "Stability report against simulation truth");
  t->add_option("--embedding", st.embedding, "Embedding directory")->required();
  t->add_option("--truth", st.truth, "Simulation directory (spec.cfg, latent.csv)")->required();
  t->add_option("--out", st.out, "Output directory")->required();
  t->add_option("--pairs", st.pairs, "Pairs a@t:b@t,... (1-based); default all exchangeable pairs");
  t->add_option("--threshold", st.threshold, "Gap-ratio pass threshold");

  ClusterArgs cl;
  auto* c = app.add_subcommand("cluster", "Gaussian mixture clustering with BIC");
  c->add_option("--embedding", cl.embedding, "Embedding directory")->required();
  c->add_option("--out", cl.out, "Output directory")->required();
  c->add_option("--grid", cl.grid, "Component counts: lo:hi[:step] or a,b,c");
  c->add_option("--coords", cl.coords, "spherical or raw");
  c->add_option("--angles", cl.angles, "positive ([0, 2pi)) or signed");
  c->add_option("--classes", cl.classes, "CSV node_label,class for the proportion table");
  c->add_option("--restarts", cl.restarts, "EM restarts per component count");
  c->add_option("--seed", cl.seed, "Random seed");

  TheoryArgs th;
  auto* h = app.add_subcommand("theory", "Explicit multilayer factorisation of a model config");
  h->add_option("--config", th.config, "Model config file")->required();
  h->add_option("--out", th.out, "Output directory")->required();

  ConsistencyArgs co;
  auto* k = app.add_subcommand("consistency", "Maximum row error against the noise-free embedding");
  k->add_option("--config", co.config, "Model config file")->required();
  k->add_option("--out", co.out, "Output directory")->required();
  k->add_option("--sizes", co.sizes, "Comma-separated node counts");
  k->add_option("--reps", co.reps, "Replicates per size");
  k->add_option("--seed", co.seed, "Random seed");

  CltArgs ct;
  auto* l = app.add_subcommand("clt", "Residual covariance of one community against theory");
  l->add_option("--config", ct.config, "Model config file")->required();
  l->add_option("--out", ct.out, "Output directory")->required();
  l->add_option("--target", ct.target, "community@time (1-based)");
  l->add_option("--n", ct.n, "Node count");
  l->add_option("--reps", ct.reps, "Replicates");
  l->add_option("--seed", ct.seed, "Random seed");

  std::vector<std::string> digest_files;
  std::string expect;
  auto* d = app.add_subcommand("digest", "SHA-256 of files");
  d->add_option("files", digest_files, "Files")->required();
  d->add_option("--expect", expect, "Fail with exit code 3 unless the digest matches");

  std::vector<std::string> argv_store{"dynembed"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  sim.has_seed = seed_opt->count() > 0;

  try {
    if (s->parsed()) return cmd_simulate(sim, out);
    if (i->parsed()) return cmd_ingest(ing, out);
    if (e->parsed()) return cmd_embed(emb, out);
    if (t->parsed()) return cmd_stability(st, out);
    if (c->parsed()) return cmd_cluster(cl, out);
    if (h->parsed()) return cmd_theory(th, out);
    if (k->parsed()) return cmd_consistency(co, out);
    if (l->parsed()) return cmd_clt(ct, out);
    if (d->parsed()) return cmd_digest(digest_files, expect, out);
  } catch (const ThresholdFailure& ex) {
    err << "threshold failure: " << ex.what() << '\n';
    return kExitThreshold;
  } catch (const InvalidArgument& ex) {
    err << "usage error: " << ex.what() << '\n';
    return kExitUsage;
  } catch (const Error& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitData;
  } catch (const nlohmann::json::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitData;
  } catch (const std::filesystem::filesystem_error& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace dynembed
