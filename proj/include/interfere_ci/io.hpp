#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "interfere_ci/distance.hpp"
#include "interfere_ci/error.hpp"
#include "interfere_ci/experiment.hpp"

namespace interfere::io {

// Plain comma-separated files: one header line, no quoting, surrounding
// whitespace ignored, blank lines skipped.

struct CsvTable {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path + ": cannot open file");
  return in;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in = open_input(path);
  CsvTable t;
  t.path = path;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_fields(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw ValidationError(path + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(t.header.size()) + " fields, got " + std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(line_no);
  }
  if (t.header.empty()) throw ValidationError(path + ": file is empty");
  return t;
}

inline void expect_header(const CsvTable& t, const std::vector<std::string>& want) {
  if (t.header != want) {
    std::string w;
    for (const auto& h : want) w += (w.empty() ? "" : ",") + h;
    throw ValidationError(t.path + ": expected header '" + w + "'");
  }
}

inline std::string where(const CsvTable& t, std::size_t row) {
  return t.path + ":" + std::to_string(t.line_numbers[row]);
}

inline std::int64_t parse_int(const std::string& s, const std::string& context) {
  std::int64_t v = 0;
  const auto* end = s.data() + s.size();
  const auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw ValidationError(context + ": not an integer: '" + s + "'");
  return v;
}

inline double parse_real(const std::string& s, const std::string& context) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size() && !std::isnan(v)) return v;
  } catch (const std::exception&) {
  }
  throw ValidationError(context + ": not a number: '" + s + "'");
}

// Units file: unit_id,treated,outcome. Row order fixes the dense index.
inline ExperimentData read_units(const std::string& path) {
  const CsvTable t = read_csv(path);
  expect_header(t, {"unit_id", "treated", "outcome"});
  ExperimentData data;
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string ctx = where(t, r);
    if (row[0].empty()) throw ValidationError(ctx + ": empty unit_id");
    if (!seen.emplace(row[0], r).second) throw ValidationError(ctx + ": duplicate unit_id '" + row[0] + "'");
    const std::int64_t x = parse_int(row[1], ctx);
    if (x != 0 && x != 1) throw ValidationError(ctx + ": treated must be 0 or 1");
    const std::int64_t y = parse_int(row[2], ctx);
    if (y < 0) throw ValidationError(ctx + ": outcome must be nonnegative");
    data.unit_ids.push_back(row[0]);
    data.treatment.push_back(static_cast<std::uint8_t>(x));
    data.outcomes.push_back(y);
  }
  if (data.unit_ids.empty()) throw ValidationError(path + ": no units");
  try {
    validate(data, false);
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return data;
}

inline std::unordered_map<std::string, std::size_t> index_of(const ExperimentData& data) {
  std::unordered_map<std::string, std::size_t> m;
  for (std::size_t i = 0; i < data.unit_ids.size(); ++i) m.emplace(data.unit_ids[i], i);
  return m;
}

inline std::size_t lookup(const std::unordered_map<std::string, std::size_t>& ids, const std::string& id,
                          const std::string& ctx) {
  const auto it = ids.find(id);
  if (it == ids.end()) throw ValidationError(ctx + ": unknown unit_id '" + id + "'");
  return it->second;
}

// Caps file: unit_id,cap. Returns S_i in dense order; every unit must appear.
inline std::vector<std::int64_t> read_caps(const std::string& path, const ExperimentData& data) {
  const CsvTable t = read_csv(path);
  expect_header(t, {"unit_id", "cap"});
  const auto ids = index_of(data);
  std::vector<std::optional<std::int64_t>> caps(data.n_units());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string ctx = where(t, r);
    const std::size_t i = lookup(ids, t.rows[r][0], ctx);
    if (caps[i]) throw ValidationError(ctx + ": duplicate unit_id '" + t.rows[r][0] + "'");
    const std::int64_t c = parse_int(t.rows[r][1], ctx);
    if (c < data.outcomes[i]) throw ValidationError(ctx + ": cap below the observed outcome");
    caps[i] = c;
  }
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < caps.size(); ++i) {
    if (!caps[i]) throw ValidationError(path + ": missing cap for unit '" + data.unit_ids[i] + "'");
    out.push_back(*caps[i]);
  }
  return out;
}

enum class NetworkMode { kCoords, kEdges, kMatrix };

inline NetworkMode parse_network_mode(const std::string& s) {
  if (s == "coords") return NetworkMode::kCoords;
  if (s == "edges") return NetworkMode::kEdges;
  if (s == "matrix") return NetworkMode::kMatrix;
  throw ValidationError("unknown network mode '" + s + "' (expected coords, edges or matrix)");
}

// coords: unit_id,x,y (every unit). edges: src,dst[,weight] using unit ids;
// all edges weighted or none. matrix: N x N whitespace-separated numbers in
// units-file order, "inf" for unreachable pairs.
inline DistanceProvider read_network(const std::string& path, NetworkMode mode, const ExperimentData& data) {
  const std::size_t n = data.n_units();
  const auto ids = index_of(data);
  try {
    if (mode == NetworkMode::kCoords) {
      const CsvTable t = read_csv(path);
      expect_header(t, {"unit_id", "x", "y"});
      std::vector<std::optional<std::array<double, 2>>> pos(n);
      for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string ctx = where(t, r);
        const std::size_t i = lookup(ids, t.rows[r][0], ctx);
        if (pos[i]) throw ValidationError(ctx + ": duplicate unit_id '" + t.rows[r][0] + "'");
        pos[i] = std::array<double, 2>{parse_real(t.rows[r][1], ctx), parse_real(t.rows[r][2], ctx)};
      }
      std::vector<std::array<double, 2>> coords;
      for (std::size_t i = 0; i < n; ++i) {
        if (!pos[i]) throw ValidationError(path + ": missing coordinates for unit '" + data.unit_ids[i] + "'");
        coords.push_back(*pos[i]);
      }
      return DistanceProvider::from_coordinates(std::move(coords));
    }
    if (mode == NetworkMode::kEdges) {
      const CsvTable t = read_csv(path);
      const bool weighted = t.header.size() == 3;
      if (weighted) expect_header(t, {"src", "dst", "weight"}); else expect_header(t, {"src", "dst"});
      std::vector<Edge> edges;
      for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const std::string ctx = where(t, r);
        Edge e{lookup(ids, t.rows[r][0], ctx), lookup(ids, t.rows[r][1], ctx), std::nullopt};
        if (weighted) e.weight = parse_real(t.rows[r][2], ctx);
        edges.push_back(e);
      }
      return distances_from_edges(edges, n);
    }
    std::ifstream in = open_input(path);
    std::vector<double> dense;
    std::string token;
    while (in >> token) dense.push_back(parse_real(token, path));
    if (dense.size() != n * n)
      throw ValidationError(path + ": expected " + std::to_string(n * n) + " matrix entries, got " +
                            std::to_string(dense.size()));
    return DistanceProvider::from_matrix(std::move(dense), n);
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    if (msg.rfind(path, 0) == 0) throw;
    throw ValidationError(path + ": " + msg);
  }
}

}  // namespace interfere::io
