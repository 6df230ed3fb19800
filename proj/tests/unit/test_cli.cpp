#include <doctest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dynembed/cli.hpp"
#include "dynembed/io.hpp"
#include "dynembed/netseries.hpp"
#include "helpers.hpp"

using namespace dynembed;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string data(const std::string& name) { return std::string(DYNEMBED_DATA_DIR) + "/" + name; }

std::string write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
  return p.string();
}

std::size_t count_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("usage errors") {
    CHECK(run({}).code == kExitUsage);
    CHECK(run({"frobnicate"}).code == kExitUsage);
    CHECK(run({"simulate", "--out", "x"}).code == kExitUsage);
    CHECK(run({"--help"}).code == kExitOk);
    CHECK(run({"--version"}).out.find(version_string()) != std::string::npos);
  }

  TEST_CASE("simulate fig1, embed with UASE, stability passes") {
    const auto dir = testing::temp_dir("cli_fig1");
    const auto sim = (dir / "sim").string();
    auto r = run({"simulate", "--config", data("fig1.cfg"), "--out", sim, "--seed", "3"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto g = read_series(sim);
    CHECK(g.num_nodes() == 1000);
    CHECK(g.num_times() == 2);
    CHECK(std::filesystem::exists(dir / "sim" / "manifest.json"));
    CHECK(std::filesystem::exists(dir / "sim" / "latent.csv"));

    const auto emb = (dir / "emb").string();
    r = run({"embed", "--input", sim, "--out", emb, "--method", "uase", "--dim", "4", "--seed", "1"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(count_lines(dir / "emb" / "embedding.csv") == 2001);
    const auto e = read_embedding(emb);
    CHECK(e.dims == std::vector<int>{4, 4});

    r = run({"stability", "--embedding", emb, "--truth", sim, "--out", (dir / "st").string()});
    CHECK_MESSAGE(r.code == kExitOk, (r.out + r.err));
    CHECK(std::filesystem::exists(dir / "st" / "stability.csv"));

    // An impossible threshold turns the same report into a threshold failure.
    r = run({"stability", "--embedding", emb, "--truth", sim, "--out", (dir / "st2").string(), "--threshold", "1e-9"});
    CHECK(r.code == kExitThreshold);

    nlohmann::json manifest;
    std::ifstream(dir / "emb" / "manifest.json") >> manifest;
    CHECK(manifest["command"] == "embed");
    CHECK(manifest["seed"] == 1);
    CHECK(manifest["outputs"].size() >= 2);
  }

  TEST_CASE("same seed, same bytes") {
    const auto dir = testing::temp_dir("cli_seed");
    for (const char* name : {"a", "b"}) {
      REQUIRE(run({"simulate", "--config", data("fig1.cfg"), "--out", (dir / name).string(), "--n", "200", "--seed", "8"}).code == 0);
    }
    for (const char* f : {"snapshot_1.csv", "snapshot_2.csv", "latent.csv"}) {
      CHECK(sha256_file(dir / "a" / f) == sha256_file(dir / "b" / f));
    }
    REQUIRE(run({"simulate", "--config", data("fig1.cfg"), "--out", (dir / "c").string(), "--n", "200", "--seed", "9"}).code == 0);
    CHECK(sha256_file(dir / "a" / "snapshot_1.csv") != sha256_file(dir / "c" / "snapshot_1.csv"));
  }

  TEST_CASE("zero-probability model gives empty snapshots and a zero embedding") {
    const auto dir = testing::temp_dir("cli_empty");
    const auto cfg = write_file(dir / "zero.cfg", "K = 1\nT = 2\nB1 = 0\nB2 = 0\nsequences = 1 1\nprobabilities = 1\nn = 30\n");
    REQUIRE(run({"simulate", "--config", cfg, "--out", (dir / "sim").string()}).code == 0);
    const auto g = read_series(dir / "sim");
    CHECK(g.edge_count(0) == 0);
    CHECK(g.edge_count(1) == 0);
    const auto r = run({"embed", "--input", (dir / "sim").string(), "--out", (dir / "emb").string(), "--dim", "2"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto e = read_embedding(dir / "emb");
    for (const auto& y : e.Y) CHECK(y.norm() == 0.0);
  }

  TEST_CASE("ingest and embed with automatic dimension") {
    const auto dir = testing::temp_dir("cli_ingest");
    std::ostringstream events;
    std::mt19937_64 rng(4);
    std::uniform_int_distribution<int> node(1, 40);
    for (int k = 0; k < 600; ++k) {
      int u = node(rng), v = node(rng);
      if (u == v) v = u % 40 + 1;
      events << k * 10 << ' ' << u << ' ' << v << '\n';
    }
    const auto input = write_file(dir / "events.txt", events.str());
    auto r = run({"ingest", "--input", input, "--out", (dir / "g").string(), "--window-seconds", "2000", "--node-order", "sorted"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const auto g = read_series(dir / "g");
    CHECK(g.num_times() == 3);
    CHECK(std::filesystem::exists(dir / "g" / "node_map.csv"));
    r = run({"embed", "--input", (dir / "g").string(), "--out", (dir / "e").string(), "--dim", "auto", "--max-dim", "10"});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(std::filesystem::exists(dir / "e" / "profile_likelihood.csv"));
    CHECK(std::filesystem::exists(dir / "e" / "scree.csv"));
  }

  TEST_CASE("data errors") {
    const auto dir = testing::temp_dir("cli_errors");
    CHECK(run({"embed", "--input", (dir / "missing").string(), "--out", (dir / "e").string()}).code == kExitData);
    const auto bad = write_file(dir / "bad.txt", "0 1 2\nzero 1 2\n");
    CHECK(run({"ingest", "--input", bad, "--out", (dir / "g").string(), "--window-seconds", "10"}).code == kExitData);
    const auto cfg = write_file(dir / "bad.cfg", "K = 2\nT = 1\nB1 = 0.1 0.2; 0.3 0.1\nsequences = 1; 2\nprobabilities = 0.5 0.5\n");
    CHECK(run({"simulate", "--config", cfg, "--out", (dir / "s").string(), "--n", "10"}).code != kExitOk);
    CHECK(run({"embed", "--input", (dir / "missing").string(), "--out", (dir / "e").string(), "--method", "joint"}).code != kExitOk);
  }

  TEST_CASE("digest") {
    const auto dir = testing::temp_dir("cli_digest");
    const auto f = write_file(dir / "abc.txt", "abc");
    const std::string abc = "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad";
    auto r = run({"digest", f});
    CHECK(r.code == 0);
    CHECK(r.out.find(abc) != std::string::npos);
    CHECK(run({"digest", f, "--expect", abc}).code == kExitOk);
    CHECK(run({"digest", f, "--expect", "00"}).code == kExitThreshold);
  }

  TEST_CASE("theory on the constant model") {
    const auto dir = testing::temp_dir("cli_theory");
    const auto r = run({"theory", "--config", data("constant.cfg"), "--out", dir.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(std::filesystem::exists(dir / "R_star.csv"));
    CHECK(std::filesystem::exists(dir / "covariances.csv"));
  }
}
