#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "qubolab/qubo.hpp"

namespace qubolab {

using json = nlohmann::json;

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace io {

/// Shortest decimal text that parses back to exactly the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

// ---------------------------------------------------------------------------
// Matrix Market coordinate format (real general, 1-indexed)

inline std::string to_matrix_market(const QuboInstance& inst) {
  std::ostringstream out;
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << "% generator: " << inst.meta().generator << " seed: " << inst.meta().seed << "\n";
  out << inst.size() << " " << inst.size() << " " << inst.entries().size() << "\n";
  for (const auto& e : inst.entries()) {
    out << (e.row + 1) << " " << (e.col + 1) << " " << format_double(e.value) << "\n";
  }
  return out.str();
}

inline QuboInstance from_matrix_market(const std::string& text, InstanceMeta meta = {}) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& msg) {
    throw ParseError("matrix market line " + std::to_string(lineno) + ": " + msg);
  };
  if (!std::getline(in, line)) fail("empty input");
  ++lineno;
  {
    std::istringstream hs(line);
    std::string banner, object, format, field, symmetry;
    hs >> banner >> object >> format >> field >> symmetry;
    if (banner != "%%MatrixMarket" || object != "matrix" || format != "coordinate") {
      fail("expected '%%MatrixMarket matrix coordinate real general' header");
    }
    if (field != "real" && field != "integer") fail("unsupported field '" + field + "'");
    if (symmetry != "general") fail("unsupported symmetry '" + symmetry + "'");
  }
  std::size_t rows = 0, cols = 0, nnz = 0;
  bool have_size = false;
  std::vector<Entry> entries;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '%') continue;
    std::istringstream ls(line);
    if (!have_size) {
      if (!(ls >> rows >> cols >> nnz)) fail("malformed size line");
      if (rows != cols || rows == 0) fail("matrix must be square and non-empty");
      have_size = true;
      entries.reserve(nnz);
      continue;
    }
    std::size_t r = 0, c = 0;
    double v = 0.0;
    if (!(ls >> r >> c >> v)) fail("malformed entry");
    if (r == 0 || c == 0 || r > rows || c > cols) fail("index out of range");
    entries.push_back({r - 1, c - 1, v});
  }
  if (!have_size) fail("missing size line");
  if (entries.size() != nnz) {
    throw ParseError("matrix market: header declares " + std::to_string(nnz) + " entries, found " +
                     std::to_string(entries.size()));
  }
  return QuboInstance(rows, std::move(entries), std::move(meta));
}

inline json meta_to_json(const QuboInstance& inst) {
  return json{{"k", inst.size()},
              {"generator", inst.meta().generator},
              {"seed", inst.meta().seed},
              {"tags", inst.meta().tags}};
}

inline std::filesystem::path meta_path_for(const std::filesystem::path& mtx) {
  auto p = mtx;
  p.replace_extension(".meta.json");
  return p;
}

/// Writes `path` (.mtx) plus the sidecar `<stem>.meta.json`.
inline void write_instance(const QuboInstance& inst, const std::filesystem::path& path) {
  write_text(path, to_matrix_market(inst));
  write_text(meta_path_for(path), meta_to_json(inst).dump(2) + "\n");
}

inline QuboInstance read_instance(const std::filesystem::path& path) {
  InstanceMeta meta;
  std::size_t k_meta = 0;
  const auto mp = meta_path_for(path);
  if (std::filesystem::exists(mp)) {
    json j;
    try {
      j = json::parse(read_text(mp));
      k_meta = j.at("k").get<std::size_t>();
      meta.generator = j.value("generator", std::string("manual"));
      meta.seed = j.value("seed", std::uint64_t{0});
      meta.tags = j.value("tags", std::vector<std::string>{});
    } catch (const json::exception& e) {
      throw ParseError("instance metadata '" + mp.string() + "': " + e.what());
    }
  }
  auto inst = from_matrix_market(read_text(path), meta);
  if (k_meta != 0 && k_meta != inst.size()) {
    throw ParseError("instance metadata '" + mp.string() + "' declares k=" + std::to_string(k_meta) +
                     " but matrix has k=" + std::to_string(inst.size()));
  }
  return inst;
}

// ---------------------------------------------------------------------------
// Plain-text vectors, one value per line

inline std::string vector_to_text(std::span<const double> v) {
  std::string s;
  for (double x : v) {
    s += format_double(x);
    s += '\n';
  }
  return s;
}

inline ObservedVector read_observed(const std::filesystem::path& path) {
  std::istringstream in(read_text(path));
  std::vector<double> v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      std::size_t used = 0;
      v.push_back(std::stod(line, &used));
    } catch (const std::exception&) {
      throw ParseError(path.string() + " line " + std::to_string(lineno) + ": not a number");
    }
  }
  return ObservedVector(std::move(v));
}

inline void write_observed(const ObservedVector& b, const std::filesystem::path& path) {
  write_text(path, vector_to_text(b.values()));
}

}  // namespace io
}  // namespace qubolab
