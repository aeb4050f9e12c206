#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tdks/lattice.hpp"
#include "tdks/propagation.hpp"
#include "tdks/state.hpp"

namespace tdks {

namespace fs = std::filesystem;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Text header shared by every trace file. The header is a list of `key value` lines
/// closed by `end`; raw little-endian float64 frames follow. Each frame is its time
/// followed by every field in declared order (complex values interleaved re, im).
struct TraceHeader {
  std::string kind;
  int version = 1;
  Grid grid;
  int particles = 1;
  std::size_t frames = 0;
  double dt = 0.0;
  bool complex_values = false;
  std::vector<std::pair<std::string, std::size_t>> fields;

  /// float64 values per frame, time included.
  std::size_t values_per_frame() const;
};

/// Reads only the header. Throws IoError.
TraceHeader read_header(const fs::path& path);

/// All writers go through a temporary file and a rename, so a failed write leaves no partial output.
void write_density_trace(const fs::path& path, const DensityTrace& trace);
DensityTrace read_density_trace(const fs::path& path);

/// Scalar energy shifts are stored as a length-1 field.
void write_potential_trace(const fs::path& path, const PotentialTrace& trace, const Grid& grid, int particles);
PotentialTrace read_potential_trace(const fs::path& path, TraceHeader* header = nullptr);

/// One frame holding every orbital as a complex field.
void write_ks_state(const fs::path& path, const KSState& state, int particles, double time);
KSState read_ks_state(const fs::path& path, double* time = nullptr, int* particles = nullptr);

struct DensitySeries {
  Grid grid;
  int particles = 1;
  std::vector<double> times;
  std::vector<RealVector> n;
};

void write_density_series(const fs::path& path, const DensitySeries& series);
DensitySeries read_density_series(const fs::path& path);

/// 1RDM checkpoints, one L x L complex matrix per frame (column-major).
struct RdmSeries {
  Grid grid;
  int particles = 1;
  std::vector<double> times;
  std::vector<ComplexMatrix> rho;
};

void write_rdm_series(const fs::path& path, const RdmSeries& series);
RdmSeries read_rdm_series(const fs::path& path);

}  // namespace tdks
