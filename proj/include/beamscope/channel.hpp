#pragma once

#include <span>
#include <string>
#include <vector>

#include "beamscope/rng.hpp"
#include "beamscope/types.hpp"

namespace beamscope {

struct ArrayGeometry {
  enum class Kind { Ula, Upa };

  Kind kind = Kind::Ula;
  int n1 = 1;  // antenna count for ULA, first axis for UPA
  int n2 = 1;  // 1 for ULA, second axis for UPA
  double spacing_over_lambda = 0.5;

  int size() const { return n1 * n2; }

  static ArrayGeometry ula(int n, double spacing = 0.5);
  static ArrayGeometry upa(int n1, int n2, double spacing = 0.5);
};

struct PathParams {
  cx gain;                    // complex path gain
  double azimuth_rad = 0.0;   // the single angle for ULA
  double elevation_rad = 0.0; // unused for ULA
};

struct ChannelSample {
  CVec spatial;
  CVec beamspace;
  std::vector<PathParams> paths;
  ArrayGeometry geometry;
};

// Unit-norm array responses, element i carrying phase -2*pi*psi*i.
CVec steering_ula(const ArrayGeometry& geometry, double theta_rad);
CVec steering_upa(const ArrayGeometry& geometry, double azi_rad, double ele_rad);

// Spatial-DFT matrix of the lens array; rows are conjugated steering vectors
// on the predefined direction grid. Unitary for every geometry.
CMat lens_matrix(const ArrayGeometry& geometry);

// sin(N*pi*x) / (N*sin(pi*x)) with the removable singularity at x = 0 closed.
double dirichlet_sinc(double x, int n);

ChannelSample sample_sv_channel(const ArrayGeometry& geometry, int num_paths, SplitRng& rng);
// Same, with a precomputed lens matrix so bulk generation does not rebuild it.
ChannelSample sample_sv_channel(const ArrayGeometry& geometry, int num_paths, SplitRng& rng,
                                const CMat& lens);
std::vector<ChannelSample> sample_sv_channels(const ArrayGeometry& geometry, int num_paths,
                                              int count, SplitRng& rng);

// Closed-form beamspace element for ULA at half-wavelength spacing. Equals
// row n of lens_matrix(geometry) applied to the spatial channel, evaluated
// without forming the matrix.
cx beamspace_element_closed_form(const ArrayGeometry& geometry, std::span<const PathParams> paths,
                                 int n);

// Binary channel file: "BSCHAN1\0", u64 antenna count, u64 record count,
// then per record the spatial channel as interleaved re/im doubles,
// little-endian throughout.
std::vector<ChannelSample> import_external_channels(const std::string& path,
                                                    const ArrayGeometry& geometry);
void export_channels(const std::string& path, std::span<const ChannelSample> samples);

}  // namespace beamscope
