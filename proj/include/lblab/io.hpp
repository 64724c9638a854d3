#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lblab/common.hpp"
#include "lblab/potential.hpp"

namespace lblab::io {

using json = nlohmann::json;

inline constexpr const char* tool_version = "0.1.0";

// Thrown on filesystem trouble (missing input, unwritable output).  Kept
// distinct from std::invalid_argument (bad config) and numerical_error so the
// command-line driver can map the three to different exit codes.
struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shortest exact decimal round trip for doubles used in all data files, so a
// rerun with the same seed produces bit-identical bytes.
inline std::string fmt_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return std::string(buf);
}

// FNV-1a, 64-bit.
inline std::uint64_t fnv1a64(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 14695981039346656037ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

inline std::string hash_hex(const std::string& bytes) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return std::string(buf);
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open for reading: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  if (in.bad()) throw io_error("read failed: " + path);
  return bytes;
}

// Write-to-temporary-then-rename, so a crash mid-write never leaves a
// truncated file under the final name.  Creates parent directories.
inline void atomic_write(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  fs::path target(path);
  std::error_code ec;
  if (target.has_parent_path()) {
    fs::create_directories(target.parent_path(), ec);
    if (ec) throw io_error("cannot create directory: " + target.parent_path().string());
  }
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open for writing: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw io_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, target, ec);
  if (ec) throw io_error("rename failed: " + tmp.string() + " -> " + path);
}

// Columnar CSV.  Row 1 holds column names, row 2 the units of each column
// (dimensionless columns say "1"), data rows follow in %.17g.
struct Column {
  std::string name;
  std::string unit = "1";
  std::vector<double> values;
};

inline std::string csv_text(const std::vector<Column>& cols) {
  require(!cols.empty(), "csv: no columns");
  std::size_t rows = cols[0].values.size();
  for (const auto& c : cols)
    require(c.values.size() == rows, "csv: ragged columns");
  std::string out;
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (c) out += ',';
    out += cols[c].name;
  }
  out += '\n';
  for (std::size_t c = 0; c < cols.size(); ++c) {
    if (c) out += ',';
    out += cols[c].unit;
  }
  out += '\n';
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (c) out += ',';
      out += fmt_g17(cols[c].values[r]);
    }
    out += '\n';
  }
  return out;
}

inline void write_csv(const std::string& path, const std::vector<Column>& cols) {
  atomic_write(path, csv_text(cols));
}

inline json potential_to_json(const FourierPotential& pot) {
  json modes = json::array();
  for (const auto& mode : pot.half_modes()) {
    modes.push_back(json{{"m", {mode.m[0], mode.m[1], mode.m[2]}},
                         {"coeff", mode.coeff}});
  }
  return json{{"dim", pot.dim()},
              {"coeff0", pot.coeff0()},
              {"smoothness_order", pot.smoothness_order()},
              {"modes", std::move(modes)}};
}

inline FourierPotential potential_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("potential: expected an object");
  // Either a preset reference or an explicit mode list.
  if (j.contains("preset")) {
    std::string name = j.at("preset").get<std::string>();
    int dim = j.value("dim", 1);
    double amplitude = j.value("amplitude", 0.1);
    int K = j.value("K", 2);
    int q = j.value("q", 4);
    return FourierPotential::from_preset(name, dim, amplitude, K, q);
  }
  int dim = j.at("dim").get<int>();
  double coeff0 = j.value("coeff0", 0.0);
  int order = j.value("smoothness_order", 2);
  if (j.contains("modes") && j.at("modes").empty())
    throw std::invalid_argument(
        "potential: explicit mode list is empty (use the \"zero\" preset for no interaction)");
  std::vector<PotentialMode> modes;
  for (const auto& jm : j.value("modes", json::array())) {
    PotentialMode m;
    auto mm = jm.at("m");
    if (!mm.is_array() || mm.size() > 3) throw std::invalid_argument("potential: bad mode vector");
    for (std::size_t a = 0; a < mm.size(); ++a) m.m[a] = mm[a].get<int>();
    m.coeff = jm.at("coeff").get<double>();
    modes.push_back(m);
  }
  return FourierPotential(dim, coeff0, std::move(modes), order);
}

// Run manifest written next to every data file a command produces.  The
// data-file hash is the reproducibility witness; wall time is informational.
inline json make_manifest(const std::string& command, const json& config,
                          long long seed, double wall_seconds,
                          const std::vector<std::pair<std::string, std::string>>& outputs) {
  json outs = json::array();
  for (const auto& [file, hash] : outputs)
    outs.push_back(json{{"file", file}, {"data_hash", hash}});
  return json{{"schema_version", "1"},
              {"tool", "lblab"},
              {"tool_version", tool_version},
              {"command", command},
              {"config", config},
              {"config_hash", hash_hex(config.dump())},
              {"seed", seed},
              {"versions", json{{"compiler", __VERSION__}, {"json", NLOHMANN_JSON_VERSION_MAJOR}}},
              {"wall_time_s", wall_seconds},
              {"outputs", std::move(outs)}};
}

}  // namespace lblab::io
