#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "dynembed/cli.hpp"
#include "dynembed/cluster.hpp"
#include "dynembed/embedders.hpp"
#include "dynembed/io.hpp"
#include "dynembed/models.hpp"
#include "dynembed/mrdpg.hpp"
#include "dynembed/netseries.hpp"
#include "dynembed/stability.hpp"

namespace py = pybind11;
using namespace dynembed;

namespace {

SvdOptions svd_options(const std::string& method) {
  SvdOptions o;
  if (method == "auto") {
    o.method = SvdMethod::Auto;
  } else if (method == "dense") {
    o.method = SvdMethod::Dense;
  } else if (method == "randomized") {
    o.method = SvdMethod::Randomized;
  } else {
    throw InvalidArgument("svd must be 'auto', 'dense' or 'randomized'");
  }
  return o;
}

TemporalWeights weights_from(const std::string& kind, double lambda, int window, const std::vector<double>& custom) {
  if (kind == "constant") return TemporalWeights::constant(window);
  if (kind == "exponential") return TemporalWeights::exponential(lambda, window);
  if (kind == "sliding") return TemporalWeights::sliding(window);
  if (kind == "custom") return TemporalWeights::from_values(custom);
  throw InvalidArgument("weights must be 'constant', 'exponential', 'sliding' or 'custom'");
}

GraphSeries series_from_dense(const std::vector<Matrix>& mats) {
  std::vector<SparseMatrix> snaps;
  for (const auto& m : mats) snaps.push_back(m.sparseView());
  return GraphSeries(std::move(snaps));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Spectral embedding of dynamic networks";
  m.attr("__version__") = version_string();

  static py::exception<Error> base(m, "Error");
  static py::exception<InvalidArgument> invalid(m, "InvalidArgument", base.ptr());
  static py::exception<DataError> data(m, "DataError", base.ptr());
  static py::exception<ParameterError> param(m, "ParameterError", base.ptr());
  static py::exception<MemoryBudgetError> budget(m, "MemoryBudgetError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const InvalidArgument& e) {
      py::set_error(invalid, e.what());
    } catch (const DataError& e) {
      py::set_error(data, e.what());
    } catch (const ParameterError& e) {
      py::set_error(param, e.what());
    } catch (const MemoryBudgetError& e) {
      py::set_error(budget, e.what());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  py::class_<GraphSeries>(m, "GraphSeries")
      .def(py::init<std::vector<SparseMatrix>, std::vector<std::string>, std::vector<std::string>>(),
           py::arg("snapshots"), py::arg("node_labels") = std::vector<std::string>{},
           py::arg("time_labels") = std::vector<std::string>{})
      .def_static("from_dense", &series_from_dense, py::arg("adjacency"))
      .def_static("from_edges", &GraphSeries::from_edges, py::arg("n"), py::arg("edges"),
                  py::arg("node_labels") = std::vector<std::string>{}, py::arg("time_labels") = std::vector<std::string>{})
      .def_property_readonly("num_nodes", &GraphSeries::num_nodes)
      .def_property_readonly("num_times", &GraphSeries::num_times)
      .def_property_readonly("node_labels", &GraphSeries::node_labels)
      .def_property_readonly("time_labels", &GraphSeries::time_labels)
      .def("adjacency", [](const GraphSeries& g, int t) { return Matrix(g.adjacency(t)); }, py::arg("t"))
      .def("sparse_adjacency", &GraphSeries::adjacency, py::arg("t"))
      .def("edge_count", &GraphSeries::edge_count, py::arg("t"))
      .def("permuted", [](const GraphSeries& g, const std::vector<int>& p) { return g.permuted(p); }, py::arg("perm"))
      .def("__eq__", [](const GraphSeries& a, const GraphSeries& b) { return a == b; });

  m.def("read_series", &read_series, py::arg("directory"));
  m.def("write_series", &write_series, py::arg("series"), py::arg("directory"));
  m.def(
      "ingest",
      [](const std::filesystem::path& path, std::int64_t window, const std::vector<std::pair<std::int64_t, std::int64_t>>& ranges,
         const std::string& columns, const std::string& node_order) {
        IngestOptions o;
        o.window_seconds = window;
        for (const auto& [a, b] : ranges) o.ranges.push_back({a, b});
        if (columns == "time-last") {
          o.columns = ColumnOrder::TimeLast;
        } else if (columns != "time-first") {
          throw InvalidArgument("columns must be 'time-first' or 'time-last'");
        }
        if (node_order == "sorted") {
          o.node_order = NodeOrder::Sorted;
        } else if (node_order != "first") {
          throw InvalidArgument("node_order must be 'first' or 'sorted'");
        }
        return ingest_edge_list(path, o).series;
      },
      py::arg("path"), py::arg("window_seconds") = 3600,
      py::arg("ranges") = std::vector<std::pair<std::int64_t, std::int64_t>>{}, py::arg("columns") = "time-first",
      py::arg("node_order") = "first");

  py::class_<DsbmSpec>(m, "DsbmSpec")
      .def_static("load", &DsbmSpec::load, py::arg("path"))
      .def_static("parse", [](const std::string& text) {
                    std::istringstream in(text);
                    return DsbmSpec::from_config(KeyValueConfig::parse(in));
                  },
                  py::arg("text"))
      .def_static("four_community_merge", &four_community_merge_spec)
      .def_readwrite("K", &DsbmSpec::K)
      .def_readwrite("T", &DsbmSpec::T)
      .def_readwrite("B", &DsbmSpec::B)
      .def_readwrite("rho", &DsbmSpec::rho)
      .def_readwrite("n", &DsbmSpec::default_n)
      .def_readwrite("seed", &DsbmSpec::default_seed)
      .def("to_config", &spec_to_config);

  py::class_<LatentSeries>(m, "LatentSeries")
      .def_readonly("community", &LatentSeries::community)
      .def_readonly("weight", &LatentSeries::weight)
      .def_readonly("sequence", &LatentSeries::sequence);

  m.def(
      "simulate",
      [](const DsbmSpec& spec, int n, std::uint64_t seed) {
        DsbmSample s = sample_dsbm(spec, n, seed);
        return py::make_tuple(std::move(s.graphs), std::move(s.latent), std::move(s.gram));
      },
      py::arg("spec"), py::arg("n"), py::arg("seed"),
      "Returns (series, latent, gram) for one draw of the model.");

  py::class_<Embedding>(m, "Embedding")
      .def_property_readonly("method", [](const Embedding& e) { return to_string(e.method); })
      .def_readonly("Y", &Embedding::Y)
      .def_readonly("X", &Embedding::X)
      .def_readonly("dims", &Embedding::dims)
      .def_readonly("singular_values", &Embedding::singular_values)
      .def_readonly("negative_eigenvalues", &Embedding::negative_eigenvalues)
      .def_readonly("warnings", &Embedding::warnings)
      .def_property_readonly("num_nodes", &Embedding::num_nodes)
      .def_property_readonly("num_times", &Embedding::num_times);

  m.def(
      "embed",
      [](const GraphSeries& g, const std::string& method, const std::vector<int>& dims, std::uint64_t seed,
         const std::string& weights, double lambda, int window, const std::vector<double>& custom, const std::string& svd,
         bool matrix_free) {
        const SvdOptions so = svd_options(svd);
        const EmbedMethod em = parse_method(method);
        if (dims.empty()) throw InvalidArgument("dims must not be empty");
        switch (em) {
          case EmbedMethod::Uase: return uase(g, dims.front(), seed, so);
          case EmbedMethod::Omnibus: {
            OmnibusOptions o;
            o.svd = so;
            o.allow_matrix_free = matrix_free;
            return omnibus(g, dims.front(), seed, o);
          }
          case EmbedMethod::Independent: {
            std::vector<int> d = dims;
            if (d.size() == 1) d.assign(static_cast<std::size_t>(g.num_times()), dims.front());
            return independent_ase(g, d, seed, so);
          }
          case EmbedMethod::Separate:
            return separate_embed(g, weights_from(weights, lambda, window, custom), dims.front(), seed, so);
        }
        throw InvalidArgument("unknown method");
      },
      py::arg("series"), py::arg("method"), py::arg("dims"), py::arg("seed") = 0, py::arg("weights") = "exponential",
      py::arg("lam") = 0.5, py::arg("window") = 0, py::arg("custom") = std::vector<double>{}, py::arg("svd") = "auto",
      py::arg("matrix_free") = false);

  m.def(
      "select_dimension",
      [](const Matrix& a, int max_d, std::uint64_t seed) {
        const DimensionSelection s = select_dimension(a, max_d, seed);
        return py::make_tuple(s.d_hat, s.singular_values, s.profile);
      },
      py::arg("matrix"), py::arg("max_d") = 0, py::arg("seed") = 0, "Returns (d_hat, singular_values, profile).");
  m.def(
      "profile_likelihood",
      [](const Vector& s) {
        const DimensionSelection r = profile_likelihood(s);
        return py::make_tuple(r.d_hat, r.profile);
      },
      py::arg("singular_values"));

  m.def(
      "construct_mrdpg",
      [](const DsbmSpec& spec) {
        const MrdpgParams p = construct_mrdpg(finite_kernel(spec));
        const MomentMatrices mom = compute_moments(p);
        py::dict d;
        d["d"] = p.d;
        d["dt"] = p.dt;
        d["X_points"] = p.X_points;
        d["Y_points"] = p.Y_points;
        d["Lambda"] = p.Lambda;
        d["signature"] = py::make_tuple(p.p, p.q);
        d["reconstruction_error"] = p.reconstruction_error;
        d["Sigma_tilde"] = mom.Sigma_tilde;
        d["R_star"] = mom.R_star;
        d["Delta_X"] = mom.Delta_X;
        return d;
      },
      py::arg("spec"));
  m.def(
      "error_covariance",
      [](const DsbmSpec& spec, int community, int t, const std::string& regime) {
        const MrdpgParams p = construct_mrdpg(finite_kernel(spec));
        const MomentMatrices mom = compute_moments(p);
        Regime r = Regime::Exact;
        if (regime == "dense") {
          r = Regime::Dense;
        } else if (regime == "sparse") {
          r = Regime::Sparse;
        } else if (regime != "exact") {
          throw InvalidArgument("regime must be 'dense', 'sparse' or 'exact'");
        }
        return theoretical_error_covariance(p, mom, community, t, r).covariance;
      },
      py::arg("spec"), py::arg("community"), py::arg("t"), py::arg("regime") = "exact",
      "Limiting covariance of the embedding error for a 0-based community and time.");
  m.def(
      "noise_free_embedding",
      [](const std::vector<Matrix>& gram, int d, std::uint64_t seed) { return noise_free_embedding(gram, d, seed).Y; },
      py::arg("gram"), py::arg("d"), py::arg("seed") = 0);

  m.def(
      "stability_report",
      [](const Embedding& emb, const DsbmSpec& spec, const LatentSeries& z, double threshold,
         const std::vector<std::pair<std::pair<int, int>, std::pair<int, int>>>& pairs) {
        StabilityOptions o;
        o.threshold = threshold;
        for (const auto& [a, b] : pairs) o.pairs.emplace_back(GroupRef{a.first, a.second}, GroupRef{b.first, b.second});
        const StabilityReport r = stability_report(emb, stability_truth(spec, z), o);
        py::list rows;
        for (const auto& p : r.pairs) {
          py::dict d;
          d["a"] = py::make_tuple(p.a.atom, p.a.t);
          d["b"] = py::make_tuple(p.b.atom, p.b.t);
          d["kind"] = to_string(p.kind);
          d["alpha"] = p.alpha;
          d["centroid_gap"] = p.centroid_gap;
          d["separation"] = p.separation;
          d["gap_ratio"] = p.gap_ratio;
          d["cov_gap"] = p.cov_gap;
          d["pass"] = p.pass;
          rows.append(d);
        }
        return rows;
      },
      py::arg("embedding"), py::arg("spec"), py::arg("latent"), py::arg("threshold") = 0.1,
      py::arg("pairs") = std::vector<std::pair<std::pair<int, int>, std::pair<int, int>>>{},
      "Pairs are ((community, t), (community, t)) with 0-based indices.");

  m.def(
      "fit_gmm",
      [](const Matrix& points, const std::vector<int>& grid, int restarts, std::uint64_t seed) {
        GmmOptions o;
        o.grid = grid;
        o.restarts = restarts;
        o.seed = seed;
        const GmmSelection sel = fit_gmm_bic(points, o);
        const ClusterAssignment a = assign(sel.best, points);
        py::dict d;
        d["G"] = sel.best.G;
        d["labels"] = a.labels;
        d["weights"] = sel.best.weights;
        d["means"] = sel.best.means;
        d["loglik"] = sel.best.loglik;
        d["loglik_trace"] = sel.best.loglik_trace;
        d["bic"] = sel.bic_table;
        return d;
      },
      py::arg("points"), py::arg("grid"), py::arg("restarts") = 10, py::arg("seed") = 0);

  m.def(
      "spherical_coordinates",
      [](const Matrix& y, bool signed_angles) {
        return spherical_coordinates(y, signed_angles ? AngleRange::Signed : AngleRange::ZeroToTwoPi).angles;
      },
      py::arg("y"), py::arg("signed_angles") = false);
  m.def("procrustes", [](const Matrix& a, const Matrix& b) { return procrustes(a, b).Q; }, py::arg("a"), py::arg("b"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command-line tool in-process; returns (exit_code, stdout, stderr).");
}
