#include "dynembed/netseries.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace dynembed {

std::uint64_t memory_budget_bytes() {
  constexpr std::uint64_t kDefault = 1ULL << 30;
  const char* env = std::getenv("DYNEMBED_MEMORY_BUDGET");
  if (env == nullptr || *env == '\0') return kDefault;
  std::uint64_t value = 0;
  const char* end = env + std::char_traits<char>::length(env);
  auto [ptr, ec] = std::from_chars(env, end, value);
  if (ec != std::errc() || ptr != end || value == 0) return kDefault;
  return value;
}

namespace {

void validate_snapshot(const SparseMatrix& a, int n, int t) {
  const std::string where = "snapshot " + std::to_string(t);
  if (a.rows() != n || a.cols() != n) {
    throw InvalidArgument(where + ": expected " + std::to_string(n) + "x" + std::to_string(n));
  }
  for (int col = 0; col < a.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(a, col); it; ++it) {
      if (it.value() != 1.0) throw InvalidArgument(where + ": entries must be 0 or 1");
      if (it.row() == it.col()) throw InvalidArgument(where + ": diagonal must be zero");
    }
  }
  const SparseMatrix diff = SparseMatrix(a.transpose()) - a;
  if (diff.norm() != 0.0) throw InvalidArgument(where + ": adjacency must be symmetric");
}

std::vector<std::string> default_labels(int count, int first) {
  std::vector<std::string> labels(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) labels[static_cast<std::size_t>(i)] = std::to_string(i + first);
  return labels;
}

}  // namespace

GraphSeries::GraphSeries(std::vector<SparseMatrix> snapshots, std::vector<std::string> node_labels,
                         std::vector<std::string> time_labels)
    : adj_(std::move(snapshots)),
      node_labels_(std::move(node_labels)),
      time_labels_(std::move(time_labels)) {
  if (adj_.empty()) throw InvalidArgument("GraphSeries needs at least one snapshot");
  n_ = static_cast<int>(adj_.front().rows());
  for (std::size_t t = 0; t < adj_.size(); ++t) {
    adj_[t].makeCompressed();
    validate_snapshot(adj_[t], n_, static_cast<int>(t));
  }
  if (node_labels_.empty()) node_labels_ = default_labels(n_, 0);
  if (time_labels_.empty()) time_labels_ = default_labels(num_times(), 1);
  if (static_cast<int>(node_labels_.size()) != n_) throw InvalidArgument("node label count != n");
  if (time_labels_.size() != adj_.size()) throw InvalidArgument("time label count != T");
}

GraphSeries GraphSeries::from_edges(int n, const std::vector<std::vector<std::pair<int, int>>>& edges,
                                    std::vector<std::string> node_labels,
                                    std::vector<std::string> time_labels) {
  std::vector<SparseMatrix> snaps;
  snaps.reserve(edges.size());
  for (const auto& list : edges) {
    std::vector<Triplet> trips;
    trips.reserve(list.size() * 2);
    for (auto [i, j] : list) {
      if (i < 0 || j < 0 || i >= n || j >= n) throw InvalidArgument("edge endpoint out of range");
      if (i == j) throw InvalidArgument("self-loop in edge list");
      trips.emplace_back(i, j, 1.0);
      trips.emplace_back(j, i, 1.0);
    }
    SparseMatrix a(n, n);
    a.setFromTriplets(trips.begin(), trips.end(), [](double, double) { return 1.0; });
    snaps.push_back(std::move(a));
  }
  return GraphSeries(std::move(snaps), std::move(node_labels), std::move(time_labels));
}

std::int64_t GraphSeries::edge_count(int t) const { return adjacency(t).nonZeros() / 2; }

double GraphSeries::density(int t) const {
  if (n_ < 2) return 0.0;
  const double pairs = 0.5 * static_cast<double>(n_) * static_cast<double>(n_ - 1);
  return static_cast<double>(edge_count(t)) / pairs;
}

GraphSeries GraphSeries::permuted(std::span<const int> perm) const {
  if (static_cast<int>(perm.size()) != n_) throw InvalidArgument("permutation size != n");
  // P(i, perm[i]) = 1 so that (P A P^T)(i, j) = A(perm[i], perm[j]).
  std::vector<Triplet> trips;
  for (int i = 0; i < n_; ++i) trips.emplace_back(i, perm[static_cast<std::size_t>(i)], 1.0);
  SparseMatrix p(n_, n_);
  p.setFromTriplets(trips.begin(), trips.end());
  std::vector<SparseMatrix> snaps;
  for (const auto& a : adj_) snaps.push_back(SparseMatrix(p * a * p.transpose()));
  std::vector<std::string> labels(node_labels_.size());
  for (int i = 0; i < n_; ++i) labels[static_cast<std::size_t>(i)] = node_labels_[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
  return GraphSeries(std::move(snaps), std::move(labels), time_labels_);
}

bool operator==(const GraphSeries& a, const GraphSeries& b) {
  if (a.n_ != b.n_ || a.adj_.size() != b.adj_.size()) return false;
  if (a.node_labels_ != b.node_labels_ || a.time_labels_ != b.time_labels_) return false;
  for (std::size_t t = 0; t < a.adj_.size(); ++t) {
    if ((a.adj_[t] - b.adj_[t]).norm() != 0.0) return false;
  }
  return true;
}

SparseMatrix unfold(const GraphSeries& g) {
  const int n = g.num_nodes();
  const int T = g.num_times();
  SparseMatrix out(n, static_cast<Eigen::Index>(n) * T);
  std::int64_t nnz = 0;
  for (const auto& a : g.snapshots()) nnz += a.nonZeros();
  out.reserve(nnz);
  // Column-major: appending the column blocks in order is a straight copy.
  for (int t = 0; t < T; ++t) {
    const SparseMatrix& a = g.adjacency(t);
    for (int col = 0; col < n; ++col) {
      out.startVec(static_cast<Eigen::Index>(t) * n + col);
      for (SparseMatrix::InnerIterator it(a, col); it; ++it) {
        out.insertBack(it.row(), static_cast<Eigen::Index>(t) * n + col) = it.value();
      }
    }
  }
  out.finalize();
  return out;
}

std::vector<SparseMatrix> split_blocks(const SparseMatrix& unfolded, int n) {
  if (n <= 0 || unfolded.rows() != n || unfolded.cols() % n != 0) {
    throw InvalidArgument("split_blocks: matrix is not n x (T n)");
  }
  const auto T = static_cast<int>(unfolded.cols() / n);
  std::vector<SparseMatrix> blocks;
  blocks.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    blocks.push_back(SparseMatrix(unfolded.middleCols(static_cast<Eigen::Index>(t) * n, n)));
  }
  return blocks;
}

Matrix to_dense_checked(const SparseMatrix& m, std::uint64_t budget_bytes) {
  const double bytes = static_cast<double>(m.rows()) * static_cast<double>(m.cols()) * sizeof(double);
  if (bytes > static_cast<double>(budget_bytes)) {
    throw MemoryBudgetError("dense copy of a " + std::to_string(m.rows()) + "x" +
                            std::to_string(m.cols()) + " matrix exceeds the memory budget of " +
                            std::to_string(budget_bytes) + " bytes (DYNEMBED_MEMORY_BUDGET)");
  }
  return Matrix(m);
}

// ---------------------------------------------------------------------------
// Edge-list ingestion

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  auto is_sep = [](char c) { return c == ',' || c == ' ' || c == '\t' || c == '\r'; };
  while (i < line.size()) {
    while (i < line.size() && is_sep(line[i])) ++i;
    const std::size_t start = i;
    while (i < line.size() && !is_sep(line[i])) ++i;
    if (i > start) fields.push_back(line.substr(start, i - start));
  }
  return fields;
}

bool parse_int64(std::string_view s, std::int64_t& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

std::vector<EdgeEvent> read_edge_events(const std::filesystem::path& path, ColumnOrder columns) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open edge list " + path.string());
  std::vector<EdgeEvent> events;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view(line);
    if (lineno == 1 && view.starts_with("\xEF\xBB\xBF")) view.remove_prefix(3);
    const auto first = view.find_first_not_of(" \t\r");
    if (first == std::string_view::npos || view[first] == '#') continue;
    const auto fields = split_fields(view);
    if (fields.size() < 3) {
      throw ParseError(path.string(), lineno, "expected at least 3 fields, got " + std::to_string(fields.size()));
    }
    const std::size_t time_col = columns == ColumnOrder::TimeFirst ? 0 : 2;
    const std::size_t u_col = columns == ColumnOrder::TimeFirst ? 1 : 0;
    const std::size_t v_col = columns == ColumnOrder::TimeFirst ? 2 : 1;
    EdgeEvent ev;
    if (!parse_int64(fields[time_col], ev.time)) {
      throw ParseError(path.string(), lineno, "timestamp '" + std::string(fields[time_col]) + "' is not an integer");
    }
    ev.u = std::string(fields[u_col]);
    ev.v = std::string(fields[v_col]);
    events.push_back(std::move(ev));
  }
  if (events.empty()) throw DataError("edge list " + path.string() + " contains no events");
  return events;
}

namespace {

void check_options(const IngestOptions& options) {
  if (options.window_seconds <= 0) throw InvalidArgument("window must be positive");
}

}  // namespace

IngestResult bin_events(std::span<const EdgeEvent> events, const IngestOptions& options,
                        const std::string& source) {
  check_options(options);
  if (events.empty()) throw DataError(source + ": no events");

  std::vector<TimeRange> ranges = options.ranges;
  if (ranges.empty()) {
    auto [lo, hi] = std::minmax_element(events.begin(), events.end(),
                                        [](const EdgeEvent& a, const EdgeEvent& b) { return a.time < b.time; });
    ranges.push_back({lo->time, hi->time + 1});
  }
  IngestResult result;
  std::vector<std::int64_t> range_first_window;
  for (const auto& r : ranges) {
    if (r.start >= r.end) throw InvalidArgument("time range start must be < end");
    range_first_window.push_back(static_cast<std::int64_t>(result.window_starts.size()));
    for (std::int64_t s = r.start; s < r.end; s += options.window_seconds) result.window_starts.push_back(s);
  }
  const auto T = static_cast<int>(result.window_starts.size());

  // Node indexing over every event, including those later dropped.
  std::unordered_map<std::string, int> index;
  std::vector<std::string> labels;
  auto intern = [&](const std::string& label) {
    if (index.emplace(label, static_cast<int>(labels.size())).second) labels.push_back(label);
  };
  for (const auto& ev : events) {
    intern(ev.u);
    intern(ev.v);
  }
  if (options.node_order == NodeOrder::Sorted) {
    std::vector<std::string> sorted = labels;
    const bool numeric = std::all_of(sorted.begin(), sorted.end(), [](const std::string& s) {
      std::int64_t v;
      return parse_int64(s, v);
    });
    if (numeric) {
      std::sort(sorted.begin(), sorted.end(), [](const std::string& a, const std::string& b) {
        std::int64_t x = 0, y = 0;
        parse_int64(a, x);
        parse_int64(b, y);
        return x != y ? x < y : a < b;
      });
    } else {
      std::sort(sorted.begin(), sorted.end());
    }
    labels = std::move(sorted);
    for (std::size_t i = 0; i < labels.size(); ++i) index[labels[i]] = static_cast<int>(i);
  }
  const auto n = static_cast<int>(labels.size());

  std::vector<std::set<std::pair<int, int>>> edge_sets(static_cast<std::size_t>(T));
  for (const auto& ev : events) {
    ++result.events_read;
    if (ev.u == ev.v) {
      if (!options.drop_self_loops) throw DataError(source + ": self-interaction event for node '" + ev.u + "'");
      ++result.self_loops_dropped;
      continue;
    }
    int window = -1;
    for (std::size_t r = 0; r < ranges.size(); ++r) {
      if (ev.time >= ranges[r].start && ev.time < ranges[r].end) {
        window = static_cast<int>(range_first_window[r] + (ev.time - ranges[r].start) / options.window_seconds);
        break;
      }
    }
    if (window < 0) {
      ++result.events_out_of_range;
      continue;
    }
    int i = index.at(ev.u);
    int j = index.at(ev.v);
    if (i > j) std::swap(i, j);
    edge_sets[static_cast<std::size_t>(window)].emplace(i, j);
  }

  std::vector<std::vector<std::pair<int, int>>> edges(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    edges[static_cast<std::size_t>(t)].assign(edge_sets[static_cast<std::size_t>(t)].begin(),
                                              edge_sets[static_cast<std::size_t>(t)].end());
  }
  std::vector<std::string> time_labels;
  for (auto s : result.window_starts) time_labels.push_back(std::to_string(s));
  result.series = GraphSeries::from_edges(n, edges, std::move(labels), std::move(time_labels));
  return result;
}

IngestResult ingest_edge_list(const std::filesystem::path& path, const IngestOptions& options) {
  check_options(options);
  const auto events = read_edge_events(path, options.columns);
  return bin_events(events, options, path.string());
}

// ---------------------------------------------------------------------------
// Directory serialization

void write_series(const GraphSeries& g, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["n"] = g.num_nodes();
  manifest["T"] = g.num_times();
  manifest["node_labels"] = g.node_labels();
  manifest["time_labels"] = g.time_labels();
  std::vector<std::string> files;
  for (int t = 0; t < g.num_times(); ++t) {
    const std::string name = "snapshot_" + std::to_string(t + 1) + ".csv";
    files.push_back(name);
    std::ofstream out(dir / name);
    if (!out) throw DataError("cannot write " + (dir / name).string());
    out << "i,j\n";
    // Column-major iteration visits (row, col) pairs sorted by col then row,
    // so emitting row < col gives a deterministic order.
    const SparseMatrix& a = g.adjacency(t);
    for (int col = 0; col < a.outerSize(); ++col) {
      for (SparseMatrix::InnerIterator it(a, col); it; ++it) {
        if (it.row() < it.col()) out << it.row() << ',' << it.col() << '\n';
      }
    }
  }
  manifest["snapshots"] = files;
  std::ofstream out(dir / "series.json");
  if (!out) throw DataError("cannot write " + (dir / "series.json").string());
  out << manifest.dump(2) << '\n';
}

GraphSeries read_series(const std::filesystem::path& dir) {
  std::ifstream in(dir / "series.json");
  if (!in) throw DataError("missing series manifest " + (dir / "series.json").string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad series manifest: " + std::string(e.what()));
  }
  const int n = manifest.at("n").get<int>();
  const auto files = manifest.at("snapshots").get<std::vector<std::string>>();
  std::vector<std::vector<std::pair<int, int>>> edges;
  for (const auto& name : files) {
    std::ifstream f(dir / name);
    if (!f) throw DataError("missing snapshot file " + (dir / name).string());
    std::vector<std::pair<int, int>> list;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
      ++lineno;
      if (lineno == 1 || line.empty()) continue;
      const auto fields = split_fields(line);
      std::int64_t i = 0, j = 0;
      if (fields.size() != 2 || !parse_int64(fields[0], i) || !parse_int64(fields[1], j)) {
        throw ParseError((dir / name).string(), lineno, "expected 'i,j'");
      }
      list.emplace_back(static_cast<int>(i), static_cast<int>(j));
    }
    edges.push_back(std::move(list));
  }
  return GraphSeries::from_edges(n, edges, manifest.at("node_labels").get<std::vector<std::string>>(),
                                 manifest.at("time_labels").get<std::vector<std::string>>());
}

}  // namespace dynembed
