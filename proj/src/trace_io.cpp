#include "tdks/trace_io.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tdks {

namespace {

constexpr const char* kMagic = "tdks-trace";

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double parse_double(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError("trace header: bad value for " + key);
  }
}

long long parse_int(const std::string& s, const std::string& key) {
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw IoError("trace header: bad value for " + key);
  return v;
}

std::uint64_t to_le(std::uint64_t u) {
  if constexpr (std::endian::native == std::endian::little) return u;
  std::uint64_t r = 0;
  for (int b = 0; b < 8; ++b) r |= ((u >> (8 * b)) & 0xffu) << (8 * (7 - b));
  return r;
}

void put(std::ostream& os, double v) {
  const std::uint64_t u = to_le(std::bit_cast<std::uint64_t>(v));
  os.write(reinterpret_cast<const char*>(&u), sizeof u);
}

double get(std::istream& is) {
  std::uint64_t u = 0;
  if (!is.read(reinterpret_cast<char*>(&u), sizeof u)) throw IoError("trace file truncated");
  return std::bit_cast<double>(to_le(u));
}

void write_header(std::ostream& os, const TraceHeader& h) {
  os << kMagic << ' ' << h.version << '\n';
  os << "kind " << h.kind << '\n';
  os << "dims " << h.grid.dims << '\n';
  os << "points " << h.grid.points << '\n';
  os << "dx " << format_double(h.grid.dx) << '\n';
  os << "offset";
  for (double o : h.grid.offset) os << ' ' << format_double(o);
  os << '\n';
  os << "mass " << format_double(h.grid.mass) << '\n';
  os << "hbar " << format_double(h.grid.hbar) << '\n';
  os << "particles " << h.particles << '\n';
  os << "frames " << h.frames << '\n';
  os << "dt " << format_double(h.dt) << '\n';
  os << "complex " << (h.complex_values ? 1 : 0) << '\n';
  os << "fields";
  for (const auto& [name, len] : h.fields) os << ' ' << name << ':' << len;
  os << '\n' << "end\n";
}

TraceHeader parse_header(std::istream& is) {
  TraceHeader h;
  std::string line;
  if (!std::getline(is, line)) throw IoError("empty trace file");
  {
    std::istringstream first(line);
    std::string magic, version;
    first >> magic >> version;
    if (magic != kMagic) throw IoError("not a trace file");
    h.version = static_cast<int>(parse_int(version, "version"));
    if (h.version != 1) throw IoError("unsupported trace format version " + version);
  }
  bool ended = false;
  bool seen_fields = false;
  while (std::getline(is, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    std::vector<std::string> vals;
    for (std::string v; ls >> v;) vals.push_back(v);
    const auto one = [&]() -> const std::string& {
      if (vals.size() != 1) throw IoError("trace header: expected one value for " + key);
      return vals[0];
    };
    if (key == "kind") h.kind = one();
    else if (key == "dims") h.grid.dims = static_cast<int>(parse_int(one(), key));
    else if (key == "points") h.grid.points = static_cast<int>(parse_int(one(), key));
    else if (key == "dx") h.grid.dx = parse_double(one(), key);
    else if (key == "offset") {
      if (vals.size() != 3) throw IoError("trace header: offset needs three values");
      for (std::size_t d = 0; d < 3; ++d) h.grid.offset[d] = parse_double(vals[d], key);
    } else if (key == "mass") h.grid.mass = parse_double(one(), key);
    else if (key == "hbar") h.grid.hbar = parse_double(one(), key);
    else if (key == "particles") h.particles = static_cast<int>(parse_int(one(), key));
    else if (key == "frames") {
      const long long f = parse_int(one(), key);
      if (f < 0) throw IoError("trace header: negative frame count");
      h.frames = static_cast<std::size_t>(f);
    } else if (key == "dt") h.dt = parse_double(one(), key);
    else if (key == "complex") h.complex_values = parse_int(one(), key) != 0;
    else if (key == "fields") {
      seen_fields = true;
      for (const std::string& v : vals) {
        const auto colon = v.find(':');
        if (colon == std::string::npos) throw IoError("trace header: bad field " + v);
        const long long len = parse_int(v.substr(colon + 1), "field length");
        if (len < 0) throw IoError("trace header: negative field length");
        h.fields.emplace_back(v.substr(0, colon), static_cast<std::size_t>(len));
      }
    } else {
      throw IoError("trace header: unknown key " + key);
    }
  }
  if (!ended) throw IoError("trace header not terminated");
  if (!seen_fields || h.kind.empty()) throw IoError("trace header incomplete");
  try {
    h.grid.validate();
  } catch (const std::invalid_argument& e) {
    throw IoError(std::string("trace header: ") + e.what());
  }
  return h;
}

void require_kind(const TraceHeader& h, const std::string& kind, const fs::path& path) {
  if (h.kind != kind) throw IoError(path.string() + ": expected a " + kind + " file, found " + h.kind);
}

std::size_t field_index(const TraceHeader& h, const std::string& name) {
  for (std::size_t i = 0; i < h.fields.size(); ++i)
    if (h.fields[i].first == name) return i;
  throw IoError("trace file lacks field " + name);
}

/// Frames as flat float64 blocks (time first).
struct RawFile {
  TraceHeader header;
  std::vector<std::vector<double>> frames;

  std::vector<double>::const_iterator field(std::size_t frame, std::size_t index) const {
    const std::size_t scale = header.complex_values ? 2 : 1;
    std::size_t at = 1;
    for (std::size_t i = 0; i < index; ++i) at += scale * header.fields[i].second;
    return frames[frame].begin() + static_cast<std::ptrdiff_t>(at);
  }
  RealVector real_field(std::size_t frame, std::size_t index) const {
    RealVector v(static_cast<Eigen::Index>(header.fields[index].second));
    std::copy_n(field(frame, index), v.size(), v.data());
    return v;
  }
  LatticeVector complex_field(std::size_t frame, std::size_t index) const {
    LatticeVector v(static_cast<Eigen::Index>(header.fields[index].second));
    auto it = field(frame, index);
    for (Eigen::Index j = 0; j < v.size(); ++j, it += 2) v[j] = {*it, *(it + 1)};
    return v;
  }
};

void write_raw(const fs::path& path, const RawFile& raw) {
  const std::size_t per_frame = raw.header.values_per_frame();
  for (const auto& f : raw.frames)
    if (f.size() != per_frame) throw std::logic_error("trace frame has the wrong size");
  fs::path tmp = path;
  tmp += ".part";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
    write_header(os, raw.header);
    for (const auto& f : raw.frames)
      for (double v : f) put(os, v);
    os.flush();
    if (!os) {
      os.close();
      std::error_code ec;
      fs::remove(tmp, ec);
      throw IoError("write failed for " + path.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " to " + path.string());
  }
}

RawFile read_raw(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  RawFile raw;
  raw.header = parse_header(is);
  const std::size_t per_frame = raw.header.values_per_frame();
  const auto start = is.tellg();
  is.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::uintmax_t>(is.tellg() - start);
  is.seekg(start);
  if (bytes != per_frame * raw.header.frames * sizeof(double))
    throw IoError(path.string() + ": payload size does not match the header");
  raw.frames.resize(raw.header.frames);
  for (auto& f : raw.frames) {
    f.resize(per_frame);
    for (double& v : f) v = get(is);
  }
  return raw;
}

void check_length(std::size_t got, std::size_t want, const char* what) {
  if (got != want) throw std::invalid_argument(std::string(what) + ": inconsistent array lengths");
}

}  // namespace

std::size_t TraceHeader::values_per_frame() const {
  std::size_t n = 0;
  for (const auto& f : fields) n += f.second;
  return 1 + (complex_values ? 2 : 1) * n;
}

TraceHeader read_header(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return parse_header(is);
}

void write_density_trace(const fs::path& path, const DensityTrace& trace) {
  RawFile raw;
  const std::size_t L = trace.grid.size();
  raw.header = {"density", 1, trace.grid, trace.particles, trace.frames(), trace.dt(), false,
                {{"n", L}, {"n_dot", L}, {"n_ddot", L}}};
  for (std::size_t k = 0; k < trace.frames(); ++k) {
    std::vector<double> f{trace.times[k]};
    for (const RealVector* v : {&trace.n[k], &trace.n_dot[k], &trace.n_ddot[k]}) {
      check_length(static_cast<std::size_t>(v->size()), L, "density trace");
      f.insert(f.end(), v->data(), v->data() + v->size());
    }
    raw.frames.push_back(std::move(f));
  }
  write_raw(path, raw);
}

DensityTrace read_density_trace(const fs::path& path) {
  const RawFile raw = read_raw(path);
  require_kind(raw.header, "density", path);
  DensityTrace t;
  t.grid = raw.header.grid;
  t.particles = raw.header.particles;
  const std::size_t in = field_index(raw.header, "n"), id = field_index(raw.header, "n_dot"),
                    idd = field_index(raw.header, "n_ddot");
  for (std::size_t k = 0; k < raw.frames.size(); ++k)
    t.push_back(raw.frames[k][0], raw.real_field(k, in), raw.real_field(k, id), raw.real_field(k, idd));
  return t;
}

void write_potential_trace(const fs::path& path, const PotentialTrace& trace, const Grid& grid, int particles) {
  RawFile raw;
  const std::size_t L = grid.size();
  const double dt = trace.frames() > 1 ? trace.times[1] - trace.times[0] : 0.0;
  raw.header = {"potential", 1, grid, particles, trace.frames(), dt, false,
                {{"v", L}, {"v_dot", L}, {"energy_shift", 1}}};
  for (std::size_t k = 0; k < trace.frames(); ++k) {
    check_length(static_cast<std::size_t>(trace.v[k].size()), L, "potential trace");
    check_length(static_cast<std::size_t>(trace.v_dot[k].size()), L, "potential trace");
    std::vector<double> f{trace.times[k]};
    f.insert(f.end(), trace.v[k].data(), trace.v[k].data() + L);
    f.insert(f.end(), trace.v_dot[k].data(), trace.v_dot[k].data() + L);
    f.push_back(k < trace.energy_shifts.size() ? trace.energy_shifts[k] : 0.0);
    raw.frames.push_back(std::move(f));
  }
  write_raw(path, raw);
}

PotentialTrace read_potential_trace(const fs::path& path, TraceHeader* header) {
  const RawFile raw = read_raw(path);
  require_kind(raw.header, "potential", path);
  const std::size_t iv = field_index(raw.header, "v"), ivd = field_index(raw.header, "v_dot"),
                    ie = field_index(raw.header, "energy_shift");
  PotentialTrace t;
  for (std::size_t k = 0; k < raw.frames.size(); ++k) {
    t.times.push_back(raw.frames[k][0]);
    t.v.push_back(raw.real_field(k, iv));
    t.v_dot.push_back(raw.real_field(k, ivd));
    t.energy_shifts.push_back(raw.real_field(k, ie)[0]);
  }
  if (header) *header = raw.header;
  return t;
}

void write_ks_state(const fs::path& path, const KSState& state, int particles, double time) {
  RawFile raw;
  const std::size_t L = state.grid.size();
  raw.header = {"ks_state", 1, state.grid, particles, 1, 0.0, true, {}};
  std::vector<double> f{time};
  for (std::size_t i = 0; i < state.orbitals.size(); ++i) {
    check_length(static_cast<std::size_t>(state.orbitals[i].size()), L, "KS state");
    raw.header.fields.emplace_back("orbital" + std::to_string(i), L);
    for (const auto& c : state.orbitals[i]) {
      f.push_back(c.real());
      f.push_back(c.imag());
    }
  }
  raw.frames.push_back(std::move(f));
  write_raw(path, raw);
}

KSState read_ks_state(const fs::path& path, double* time, int* particles) {
  const RawFile raw = read_raw(path);
  require_kind(raw.header, "ks_state", path);
  if (raw.frames.size() != 1 || !raw.header.complex_values) throw IoError(path.string() + ": malformed KS state");
  KSState s{raw.header.grid, {}};
  for (std::size_t i = 0; i < raw.header.fields.size(); ++i) {
    if (raw.header.fields[i].second != raw.header.grid.size()) throw IoError(path.string() + ": orbital length");
    s.orbitals.push_back(raw.complex_field(0, i));
  }
  if (time) *time = raw.frames[0][0];
  if (particles) *particles = raw.header.particles;
  return s;
}

void write_density_series(const fs::path& path, const DensitySeries& series) {
  RawFile raw;
  const std::size_t L = series.grid.size();
  const double dt = series.times.size() > 1 ? series.times[1] - series.times[0] : 0.0;
  raw.header = {"density_series", 1, series.grid, series.particles, series.times.size(), dt, false, {{"n", L}}};
  check_length(series.n.size(), series.times.size(), "density series");
  for (std::size_t k = 0; k < series.times.size(); ++k) {
    check_length(static_cast<std::size_t>(series.n[k].size()), L, "density series");
    std::vector<double> f{series.times[k]};
    f.insert(f.end(), series.n[k].data(), series.n[k].data() + L);
    raw.frames.push_back(std::move(f));
  }
  write_raw(path, raw);
}

DensitySeries read_density_series(const fs::path& path) {
  const RawFile raw = read_raw(path);
  require_kind(raw.header, "density_series", path);
  DensitySeries s{raw.header.grid, raw.header.particles, {}, {}};
  const std::size_t in = field_index(raw.header, "n");
  for (std::size_t k = 0; k < raw.frames.size(); ++k) {
    s.times.push_back(raw.frames[k][0]);
    s.n.push_back(raw.real_field(k, in));
  }
  return s;
}

void write_rdm_series(const fs::path& path, const RdmSeries& series) {
  RawFile raw;
  const std::size_t L = series.grid.size();
  const double dt = series.times.size() > 1 ? series.times[1] - series.times[0] : 0.0;
  raw.header = {"rdm", 1, series.grid, series.particles, series.times.size(), dt, true, {{"rho", L * L}}};
  check_length(series.rho.size(), series.times.size(), "1RDM series");
  for (std::size_t k = 0; k < series.times.size(); ++k) {
    const ComplexMatrix& m = series.rho[k];
    check_length(static_cast<std::size_t>(m.size()), L * L, "1RDM series");
    std::vector<double> f{series.times[k]};
    f.reserve(1 + 2 * L * L);
    for (Eigen::Index j = 0; j < m.size(); ++j) {
      f.push_back(m.data()[j].real());
      f.push_back(m.data()[j].imag());
    }
    raw.frames.push_back(std::move(f));
  }
  write_raw(path, raw);
}

RdmSeries read_rdm_series(const fs::path& path) {
  const RawFile raw = read_raw(path);
  require_kind(raw.header, "rdm", path);
  const auto L = static_cast<Eigen::Index>(raw.header.grid.size());
  const std::size_t ir = field_index(raw.header, "rho");
  if (raw.header.fields[ir].second != static_cast<std::size_t>(L * L) || !raw.header.complex_values)
    throw IoError(path.string() + ": malformed 1RDM series");
  RdmSeries s{raw.header.grid, raw.header.particles, {}, {}};
  for (std::size_t k = 0; k < raw.frames.size(); ++k) {
    s.times.push_back(raw.frames[k][0]);
    const LatticeVector flat = raw.complex_field(k, ir);
    s.rho.push_back(Eigen::Map<const ComplexMatrix>(flat.data(), L, L));
  }
  return s;
}

}  // namespace tdks
