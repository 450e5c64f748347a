#include "vcsel/io.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "vcsel/correlation.hpp"

#ifndef VCSEL_VERSION
#define VCSEL_VERSION "0.1.0-unknown"
#endif

namespace vcsel {

const char* version() { return VCSEL_VERSION; }

namespace {

struct Fnv1a {
  std::uint64_t state = 0xcbf29ce484222325ULL;
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state ^= p[i];
      state *= 0x100000001b3ULL;
    }
  }
  void value(double v) {
    // +0 and -0 hash alike.
    const std::uint64_t bits = v == 0.0 ? 0 : std::bit_cast<std::uint64_t>(v);
    unsigned char le[8];
    for (int i = 0; i < 8; ++i) le[i] = static_cast<unsigned char>(bits >> (8 * i));
    bytes(le, 8);
  }
  void vector(const AnisotropyVector& v) {
    for (int i = 0; i < 3; ++i) value(v.components[i]);
  }
};

}  // namespace

std::uint64_t params_hash(const LaserParams& p) {
  Fnv1a h;
  h.value(p.kappa2);
  h.value(p.gamma);
  h.value(p.Gamma);
  h.value(p.w2);
  h.value(p.alpha);
  h.value(p.D0);
  h.vector(p.g);
  h.vector(p.l);
  h.vector(p.Omega);
  return h.state;
}

std::string hex64(std::uint64_t value) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << value;
  return os.str();
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error(ErrorCode::io, "cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::io, "write failed: " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::io, "cannot rename onto " + path.string());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::io, "read failed: " + path.string());
  return ss.str();
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

// Correlation tables.

void CorrelatorChannels::resize(std::size_t n) {
  dn_dn_abs.assign(n, 0.0);
  dn_dn_rel.assign(n, 0.0);
  p3p3.assign(n, 0.0);
  p3p2.assign(n, 0.0);
  p2p2.assign(n, 0.0);
}

std::vector<double> lag_grid(double max_lag, double step) {
  if (!(step > 0.0) || !(max_lag >= 0.0)) {
    throw Error(ErrorCode::invalid_parameters, "lag grid needs step > 0 and max_lag >= 0");
  }
  const auto n = static_cast<std::size_t>(std::floor(max_lag / step + 1e-9));
  std::vector<double> tau(n + 1);
  for (std::size_t k = 0; k <= n; ++k) tau[k] = static_cast<double>(k) * step;
  return tau;
}

namespace {

const char* kColumns = "tau_scaled,tau_seconds,dn_dn_abs,dn_dn_rel,p3p3,p3p2,p2p2";

void write_table(std::ostream& os, const CorrelationRecord& r, const CorrelatorChannels& c,
                 const char* kind) {
  os << "# kind=" << kind << " source=" << r.source << " params_hash=" << hex64(r.params_hash)
     << " seed=" << r.seed << " n_s=" << format_double(r.n_s)
     << " time_unit_s=" << format_double(r.time_unit) << '\n';
  os << kColumns << '\n';
  for (std::size_t k = 0; k < r.size(); ++k) {
    os << format_double(r.tau[k]) << ',' << format_double(r.tau[k] * r.time_unit) << ','
       << format_double(c.dn_dn_abs[k]) << ',' << format_double(c.dn_dn_rel[k]) << ','
       << format_double(c.p3p3[k]) << ',' << format_double(c.p3p2[k]) << ','
       << format_double(c.p2p2[k]) << '\n';
  }
}

struct Table {
  std::string source;
  std::uint64_t hash = 0;
  std::uint64_t seed = 0;
  double n_s = 1.0;
  double time_unit = 1.0;
  std::vector<std::array<double, 7>> rows;
};

double parse_number(const std::string& text, int line) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw Error(ErrorCode::schema, "line " + std::to_string(line) + ": bad number '" + text + "'");
  }
  return v;
}

Table read_table(std::istream& is) {
  Table t;
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream ss(line.substr(1));
      std::string tok;
      while (ss >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
        if (key == "source") t.source = val;
        else if (key == "params_hash") t.hash = std::stoull(val, nullptr, 16);
        else if (key == "seed") t.seed = std::stoull(val);
        else if (key == "n_s") t.n_s = parse_number(val, lineno);
        else if (key == "time_unit_s") t.time_unit = parse_number(val, lineno);
      }
      continue;
    }
    if (!header) {
      if (line != kColumns) {
        throw Error(ErrorCode::schema, "line " + std::to_string(lineno) + ": expected header '" +
                                           kColumns + "'");
      }
      header = true;
      continue;
    }
    std::array<double, 7> row{};
    std::istringstream ss(line);
    std::string cell;
    int col = 0;
    while (std::getline(ss, cell, ',')) {
      if (col >= 7) break;
      row[col++] = parse_number(cell, lineno);
    }
    if (col != 7) {
      throw Error(ErrorCode::schema, "line " + std::to_string(lineno) + ": expected 7 columns");
    }
    t.rows.push_back(row);
  }
  if (!header) throw Error(ErrorCode::schema, "correlation table has no header");
  return t;
}

void fill(CorrelatorChannels& c, const Table& t) {
  c.resize(t.rows.size());
  for (std::size_t k = 0; k < t.rows.size(); ++k) {
    c.dn_dn_abs[k] = t.rows[k][2];
    c.dn_dn_rel[k] = t.rows[k][3];
    c.p3p3[k] = t.rows[k][4];
    c.p3p2[k] = t.rows[k][5];
    c.p2p2[k] = t.rows[k][6];
  }
}

}  // namespace

void write_correlation_csv(std::ostream& os, const CorrelationRecord& record) {
  write_table(os, record, record.value, "value");
}

void write_correlation_stderr_csv(std::ostream& os, const CorrelationRecord& record) {
  if (record.stderr_.p3p3.size() != record.size()) {
    throw Error(ErrorCode::invalid_parameters, "record carries no standard errors");
  }
  write_table(os, record, record.stderr_, "stderr");
}

CorrelationRecord read_correlation_csv(std::istream& is) {
  const Table t = read_table(is);
  CorrelationRecord r;
  r.tau.reserve(t.rows.size());
  for (const auto& row : t.rows) r.tau.push_back(row[0]);
  fill(r.value, t);
  r.source = t.source;
  r.params_hash = t.hash;
  r.seed = t.seed;
  r.n_s = t.n_s;
  r.time_unit = t.time_unit;
  r.empirical = t.source == "empirical";
  return r;
}

void read_correlation_stderr_csv(std::istream& is, CorrelationRecord& record) {
  const Table t = read_table(is);
  if (t.rows.size() != record.size()) {
    throw Error(ErrorCode::schema, "stderr table length differs from the value table");
  }
  fill(record.stderr_, t);
}

}  // namespace vcsel
