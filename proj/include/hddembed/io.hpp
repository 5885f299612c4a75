#pragma once

// Plain-text formats: headerless CSV for samples and targets, CSV with a
// '#' header line for feature matrices, JSON for manifests and reports.

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hddembed/datasets.hpp"
#include "hddembed/errors.hpp"
#include "hddembed/sample_set.hpp"
#include "hddembed/seeding.hpp"
#include "hddembed/types.hpp"

namespace hddembed::io {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

/// 17 significant digits: round-trips every double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

inline void finish(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

inline void write_matrix_csv(const fs::path& path, const RowMatrix& m, const std::string& header = {}) {
  auto out = open_out(path);
  if (!header.empty()) out << "# " << header << '\n';
  std::string line;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    line.clear();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) line += ',';
      line += format_double(m(i, j));
    }
    line += '\n';
    out << line;
  }
  finish(out, path);
}

inline void write_vector_csv(const fs::path& path, std::span<const double> v) {
  auto out = open_out(path);
  for (double x : v) out << format_double(x) << '\n';
  finish(out, path);
}

namespace detail {

inline double parse_double(std::string_view tok, const fs::path& path, std::size_t line) {
  while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.remove_prefix(1);
  while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t' || tok.back() == '\r')) tok.remove_suffix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || tok.empty())
    throw IoError(path.string() + ":" + std::to_string(line) + ": cannot parse number '" + std::string(tok) + "'");
  return v;
}

}  // namespace detail

/// Reads a numeric CSV; lines starting with '#' and blank lines are skipped.
inline RowMatrix read_matrix_csv(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<double> values;
  Eigen::Index cols = -1, rows = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r" || line[0] == '#') continue;
    Eigen::Index count = 0;
    std::string_view rest(line);
    while (true) {
      auto comma = rest.find(',');
      values.push_back(detail::parse_double(rest.substr(0, comma), path, lineno));
      ++count;
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (cols < 0) cols = count;
    if (count != cols) throw IoError(path.string() + ":" + std::to_string(lineno) + ": ragged row");
    ++rows;
  }
  if (rows == 0) throw IoError("'" + path.string() + "' contains no rows");
  RowMatrix m(rows, cols);
  std::copy(values.begin(), values.end(), m.data());
  return m;
}

inline std::vector<double> read_vector_csv(const fs::path& path) {
  RowMatrix m = read_matrix_csv(path);
  if (m.cols() != 1) throw IoError("'" + path.string() + "' must have a single column");
  return {m.data(), m.data() + m.rows()};
}

inline void write_json(const fs::path& path, const Json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  finish(out, path);
}

inline Json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("'" + path.string() + "': " + e.what());
  }
}

/// 16 hex digits of the FNV-1a hash of a string.
inline std::string hash_hex(const std::string& s) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << hddembed::detail::fnv1a(s);
  return os.str();
}

inline Json gmm_to_json(const TruncatedGmm& g) {
  Json comps = Json::array();
  for (const auto& c : g.components()) {
    Json cov = Json::array();
    for (Eigen::Index a = 0; a < c.cov.rows(); ++a) {
      Json row = Json::array();
      for (Eigen::Index b = 0; b < c.cov.cols(); ++b) row.push_back(c.cov(a, b));
      cov.push_back(row);
    }
    comps.push_back({{"mean", std::vector<double>(c.mean.data(), c.mean.data() + c.mean.size())}, {"cov", cov}});
  }
  return {{"lo", std::vector<double>(g.lo().data(), g.lo().data() + g.lo().size())},
          {"hi", std::vector<double>(g.hi().data(), g.hi().data() + g.hi().size())},
          {"components", comps}};
}

inline TruncatedGmm gmm_from_json(const Json& j) {
  try {
    auto to_vec = [](const Json& a) {
      auto v = a.get<std::vector<double>>();
      return Vector(Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    std::vector<GaussianComponent> comps;
    for (const auto& c : j.at("components")) {
      Vector mean = to_vec(c.at("mean"));
      const auto& rows = c.at("cov");
      Eigen::MatrixXd cov(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
      for (std::size_t a = 0; a < rows.size(); ++a) {
        auto r = rows[a].get<std::vector<double>>();
        if (r.size() != rows.size()) throw IoError("pdf covariance must be square");
        for (std::size_t b = 0; b < r.size(); ++b)
          cov(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = r[b];
      }
      comps.push_back({mean, cov});
    }
    return TruncatedGmm(std::move(comps), to_vec(j.at("lo")), to_vec(j.at("hi")));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed pdf parameters: ") + e.what());
  }
}

/// Dataset directory description written by `synth`.
struct RunManifest {
  fs::path dir;
  std::string kind;
  int big_n = 0;
  int n = 0;
  int dim = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> sample_files;
  std::string targets_file;
  Json generator = Json::object();
  std::vector<Json> pdfs;  // empty when the true densities are unknown

  Json to_json() const {
    Json j;
    j["kind"] = kind;
    j["N"] = big_n;
    j["n"] = n;
    j["dim"] = dim;
    j["seed"] = seed;
    j["generator"] = generator;
    j["targets"] = targets_file;
    j["samples"] = sample_files;
    if (!pdfs.empty()) j["pdfs"] = pdfs;
    return j;
  }
};

inline void write_manifest(const RunManifest& m) { write_json(m.dir / "manifest.json", m.to_json()); }

/// Accepts either the dataset directory or the manifest file itself.
inline RunManifest read_manifest(const fs::path& where) {
  fs::path file = fs::is_directory(where) ? where / "manifest.json" : where;
  Json j = read_json(file);
  RunManifest m;
  m.dir = file.parent_path();
  try {
    m.kind = j.at("kind").get<std::string>();
    m.big_n = j.at("N").get<int>();
    m.n = j.at("n").get<int>();
    m.dim = j.at("dim").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.generator = j.value("generator", Json::object());
    m.targets_file = j.at("targets").get<std::string>();
    m.sample_files = j.at("samples").get<std::vector<std::string>>();
    if (j.contains("pdfs")) m.pdfs = j.at("pdfs").get<std::vector<Json>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("'" + file.string() + "': " + e.what());
  }
  if (m.big_n < 1 || m.n < 1 || m.dim < 1) throw IoError("'" + file.string() + "': N, n and dim must be >= 1");
  if (static_cast<int>(m.sample_files.size()) != m.big_n)
    throw IoError("'" + file.string() + "': sample file count does not match N");
  if (!m.pdfs.empty() && static_cast<int>(m.pdfs.size()) != m.big_n)
    throw IoError("'" + file.string() + "': pdf count does not match N");
  for (const auto& f : m.sample_files)
    if (!fs::exists(m.dir / f)) throw IoError("manifest references missing file '" + (m.dir / f).string() + "'");
  if (!fs::exists(m.dir / m.targets_file))
    throw IoError("manifest references missing file '" + (m.dir / m.targets_file).string() + "'");
  return m;
}

inline std::vector<SampleSet> load_samples(const RunManifest& m) {
  std::vector<SampleSet> out;
  out.reserve(m.sample_files.size());
  for (const auto& f : m.sample_files) {
    RowMatrix pts = read_matrix_csv(m.dir / f);
    if (pts.cols() != m.dim) throw IoError("'" + (m.dir / f).string() + "': column count does not match dim");
    try {
      out.emplace_back(std::move(pts));
    } catch (const DomainError& e) {
      throw IoError("'" + (m.dir / f).string() + "': " + e.what());
    }
  }
  return out;
}

inline std::vector<double> load_targets(const RunManifest& m) {
  auto t = read_vector_csv(m.dir / m.targets_file);
  if (static_cast<int>(t.size()) != m.big_n) throw IoError("targets file length does not match N");
  return t;
}

inline std::vector<TruncatedGmm> load_pdfs(const RunManifest& m) {
  std::vector<TruncatedGmm> out;
  for (const auto& j : m.pdfs) out.push_back(gmm_from_json(j));
  return out;
}

}  // namespace hddembed::io
