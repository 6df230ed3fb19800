#include "dynembed/io.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "dynembed/linalg.hpp"

namespace dynembed {

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (ctx_ == nullptr || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 init failed");
  }
  ~Sha256() { EVP_MD_CTX_free(ctx_); }
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const char* data, std::size_t len) {
    if (EVP_DigestUpdate(ctx_, data, len) != 1) throw Error("SHA-256 update failed");
  }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_, md, &len) != 1) throw Error("SHA-256 final failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return os.str();
  }

 private:
  EVP_MD_CTX* ctx_;
};

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

double parse_double(const std::string& s, const std::filesystem::path& path, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw ParseError(path.string(), line, "'" + s + "' is not a number");
  return v;
}

long long parse_int(const std::string& s, const std::filesystem::path& path, std::size_t line) {
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0') throw ParseError(path.string(), line, "'" + s + "' is not an integer");
  return v;
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  Sha256 h;
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  return out + "\"";
}

std::vector<std::string> write_embedding(const Embedding& emb, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const int width = emb.max_dim();
  {
    auto out = open_out(dir / "embedding.csv");
    out << "node_label,time_label";
    for (int j = 1; j <= width; ++j) out << ",y_" << j;
    out << '\n';
    for (int t = 0; t < emb.num_times(); ++t) {
      const Matrix y = emb.padded(t, width);
      for (Eigen::Index i = 0; i < y.rows(); ++i) {
        out << csv_field(emb.node_labels.at(static_cast<std::size_t>(i))) << ','
            << csv_field(emb.time_labels.at(static_cast<std::size_t>(t)));
        for (Eigen::Index j = 0; j < width; ++j) out << ',' << format_double(y(i, j));
        out << '\n';
      }
    }
  }
  nlohmann::json j;
  j["method"] = to_string(emb.method);
  j["n"] = emb.num_nodes();
  j["T"] = emb.num_times();
  j["dims"] = emb.dims;
  std::vector<std::vector<double>> sv;
  for (const auto& s : emb.singular_values) sv.emplace_back(s.data(), s.data() + s.size());
  j["singular_values"] = sv;
  j["negative_eigenvalues"] = emb.negative_eigenvalues;
  j["warnings"] = emb.warnings;
  auto out = open_out(dir / "embedding.json");
  out << j.dump(2) << '\n';
  return {"embedding.csv", "embedding.json"};
}

Embedding read_embedding(const std::filesystem::path& dir) {
  nlohmann::json j;
  {
    auto in = open_in(dir / "embedding.json");
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw DataError((dir / "embedding.json").string() + ": " + e.what());
    }
  }
  Embedding emb;
  try {
    emb.method = parse_method(j.at("method").get<std::string>());
    emb.dims = j.at("dims").get<std::vector<int>>();
    for (const auto& s : j.at("singular_values").get<std::vector<std::vector<double>>>()) {
      emb.singular_values.push_back(Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size())));
    }
    emb.negative_eigenvalues = j.value("negative_eigenvalues", std::vector<int>{});
    emb.warnings = j.value("warnings", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw DataError((dir / "embedding.json").string() + ": " + e.what());
  }
  const int n = j.at("n").get<int>();
  const int T = j.at("T").get<int>();
  if (static_cast<int>(emb.dims.size()) != T) throw DataError("embedding.json: dims length != T");
  const auto path = dir / "embedding.csv";
  auto in = open_in(path);
  std::string line;
  std::getline(in, line);
  const auto header = split_csv_line(line);
  const int width = static_cast<int>(header.size()) - 2;
  if (width < 1) throw ParseError(path.string(), 1, "expected node_label,time_label,y_1..");
  for (int t = 0; t < T; ++t) emb.Y.push_back(Matrix::Zero(n, emb.dims[static_cast<std::size_t>(t)]));
  std::size_t lineno = 1;
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < n; ++i) {
      if (!std::getline(in, line)) throw ParseError(path.string(), lineno + 1, "too few rows");
      ++lineno;
      const auto cells = split_csv_line(line);
      if (static_cast<int>(cells.size()) != width + 2) throw ParseError(path.string(), lineno, "wrong column count");
      if (t == 0) emb.node_labels.push_back(cells[0]);
      if (i == 0) emb.time_labels.push_back(cells[1]);
      if (cells[0] != emb.node_labels[static_cast<std::size_t>(i)] || cells[1] != emb.time_labels[static_cast<std::size_t>(t)]) {
        throw ParseError(path.string(), lineno, "rows are not in time-major node order");
      }
      for (int c = 0; c < emb.dims[static_cast<std::size_t>(t)]; ++c) {
        emb.Y[static_cast<std::size_t>(t)](i, c) = parse_double(cells[static_cast<std::size_t>(c) + 2], path, lineno);
      }
    }
  }
  return emb;
}

void write_latent(const LatentSeries& z, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "node,sequence,weight";
  for (int t = 1; t <= z.num_times(); ++t) out << ",c_" << t;
  out << '\n';
  for (int i = 0; i < z.num_nodes(); ++i) {
    out << i << ',' << z.sequence[static_cast<std::size_t>(i)] + 1 << ',' << format_double(z.weight(i));
    for (int t = 0; t < z.num_times(); ++t) out << ',' << z.community(i, t) + 1;
    out << '\n';
  }
}

LatentSeries read_latent(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  const int T = static_cast<int>(split_csv_line(line).size()) - 3;
  if (T < 1) throw ParseError(path.string(), 1, "expected node,sequence,weight,c_1..c_T");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    rows.push_back(split_csv_line(line));
  }
  LatentSeries z;
  const auto n = static_cast<Eigen::Index>(rows.size());
  z.community.resize(n, T);
  z.weight.resize(n);
  z.sequence.resize(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t lineno = r + 2;
    if (static_cast<int>(rows[r].size()) != T + 3) throw ParseError(path.string(), lineno, "wrong column count");
    if (parse_int(rows[r][0], path, lineno) != static_cast<long long>(r)) {
      throw ParseError(path.string(), lineno, "nodes must be listed in order 0..n-1");
    }
    z.sequence[r] = static_cast<int>(parse_int(rows[r][1], path, lineno)) - 1;
    z.weight(static_cast<Eigen::Index>(r)) = parse_double(rows[r][2], path, lineno);
    for (int t = 0; t < T; ++t) {
      z.community(static_cast<Eigen::Index>(r), t) = static_cast<int>(parse_int(rows[r][static_cast<std::size_t>(t) + 3], path, lineno)) - 1;
    }
  }
  return z;
}

std::string spec_to_config(const DsbmSpec& spec) {
  std::ostringstream os;
  os << "K = " << spec.K << "\nT = " << spec.T << '\n';
  for (int t = 0; t < spec.T; ++t) {
    const Matrix& b = spec.B[static_cast<std::size_t>(t)];
    os << 'B' << t + 1 << " =";
    for (Eigen::Index i = 0; i < b.rows(); ++i) {
      for (Eigen::Index j = 0; j < b.cols(); ++j) os << ' ' << format_double(b(i, j));
      if (i + 1 < b.rows()) os << ';';
    }
    os << '\n';
  }
  os << "sequences =";
  for (std::size_t s = 0; s < spec.sequences.size(); ++s) {
    for (int c : spec.sequences[s]) os << ' ' << c + 1;
    if (s + 1 < spec.sequences.size()) os << ';';
  }
  os << "\nprobabilities =";
  for (double p : spec.probabilities) os << ' ' << format_double(p);
  os << "\nassignment = " << (spec.assignment == Assignment::Balanced ? "balanced" : "random") << '\n';
  switch (spec.degree) {
    case DegreeModel::None: os << "degree = none\n"; break;
    case DegreeModel::Uniform: os << "degree = uniform\nweight_low = " << format_double(spec.weight_low) << '\n'; break;
    case DegreeModel::Explicit:
      os << "degree = explicit\nweights =";
      for (double w : spec.weights) os << ' ' << format_double(w);
      os << '\n';
      break;
  }
  os << "rho = " << format_double(spec.rho) << '\n';
  if (spec.default_n > 0) os << "n = " << spec.default_n << '\n';
  os << "seed = " << spec.default_seed << '\n';
  return os.str();
}

}  // namespace dynembed
