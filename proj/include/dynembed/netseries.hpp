#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dynembed/common.hpp"

namespace dynembed {

// A time series of undirected simple graphs on a shared node set.
//
// Snapshots are stored sparse; each is symmetric with a zero diagonal and
// 0/1 entries. Nodes that are inactive at a time are kept as isolated nodes.
// Immutable after construction.
class GraphSeries {
 public:
  GraphSeries() = default;

  // Validates every snapshot; throws InvalidArgument on asymmetric,
  // non-binary, self-looped or mis-shaped input. Empty label vectors are
  // filled with "0".."n-1" and "1".."T".
  GraphSeries(std::vector<SparseMatrix> snapshots, std::vector<std::string> node_labels = {},
              std::vector<std::string> time_labels = {});

  // Builds a series from per-snapshot undirected edge lists on nodes 0..n-1.
  // Duplicate edges collapse; self-loops are rejected.
  static GraphSeries from_edges(int n, const std::vector<std::vector<std::pair<int, int>>>& edges,
                                std::vector<std::string> node_labels = {},
                                std::vector<std::string> time_labels = {});

  int num_nodes() const noexcept { return n_; }
  int num_times() const noexcept { return static_cast<int>(adj_.size()); }
  const SparseMatrix& adjacency(int t) const { return adj_.at(static_cast<std::size_t>(t)); }
  const std::vector<SparseMatrix>& snapshots() const noexcept { return adj_; }
  const std::vector<std::string>& node_labels() const noexcept { return node_labels_; }
  const std::vector<std::string>& time_labels() const noexcept { return time_labels_; }

  // Number of undirected edges in snapshot t.
  std::int64_t edge_count(int t) const;
  // Edges / (n choose 2).
  double density(int t) const;

  // Node i of the result is node perm[i] of this series.
  GraphSeries permuted(std::span<const int> perm) const;

  friend bool operator==(const GraphSeries& a, const GraphSeries& b);

 private:
  int n_ = 0;
  std::vector<SparseMatrix> adj_;
  std::vector<std::string> node_labels_;
  std::vector<std::string> time_labels_;
};

// The n x (T n) column concatenation (A(1) | ... | A(T)).
SparseMatrix unfold(const GraphSeries& g);

// Inverse of unfold for a given block width.
std::vector<SparseMatrix> split_blocks(const SparseMatrix& unfolded, int n);

// Dense copy of a sparse matrix, refusing when it would exceed the memory budget.
Matrix to_dense_checked(const SparseMatrix& m, std::uint64_t budget_bytes = memory_budget_bytes());

struct EdgeEvent {
  std::string u;
  std::string v;
  std::int64_t time = 0;
};

// Half-open interval [start, end) of timestamps.
struct TimeRange {
  std::int64_t start = 0;
  std::int64_t end = 0;
};

enum class ColumnOrder {
  TimeFirst,  // time u v [extra...]
  TimeLast,   // u v time [extra...]
};

enum class NodeOrder {
  FirstAppearance,
  Sorted,  // numeric when every label is an integer, lexicographic otherwise
};

struct IngestOptions {
  std::int64_t window_seconds = 3600;
  // Windows tile each range consecutively; several ranges (e.g. the same
  // hours on two days) concatenate in the given order.
  std::vector<TimeRange> ranges;
  ColumnOrder columns = ColumnOrder::TimeFirst;
  NodeOrder node_order = NodeOrder::FirstAppearance;
  bool drop_self_loops = true;
};

struct IngestResult {
  GraphSeries series;
  std::size_t events_read = 0;
  std::size_t events_out_of_range = 0;
  std::size_t self_loops_dropped = 0;
  std::vector<std::int64_t> window_starts;
};

// Parses "time u v" / "u v time" lines (whitespace or comma separated, '#'
// comments). An edge exists in a window iff at least one event between the
// two nodes falls inside it. The node set is the union over all events in
// the file, so nodes only active outside the ranges stay as isolated nodes.
std::vector<EdgeEvent> read_edge_events(const std::filesystem::path& path, ColumnOrder columns);
IngestResult bin_events(std::span<const EdgeEvent> events, const IngestOptions& options,
                        const std::string& source = "<events>");
IngestResult ingest_edge_list(const std::filesystem::path& path, const IngestOptions& options);

// Directory layout: series.json (n, T, labels, file list) plus one
// "snapshot_<t>.csv" edge list per time with 0-based node indices i < j.
void write_series(const GraphSeries& g, const std::filesystem::path& dir);
GraphSeries read_series(const std::filesystem::path& dir);

}  // namespace dynembed
