#include "beamscope/channel.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "beamscope/io.hpp"

namespace beamscope {

namespace {

void check_geometry(const ArrayGeometry& g) {
  if (g.n1 < 1 || g.n2 < 1) throw std::invalid_argument("geometry: antenna counts must be >= 1");
  if (g.kind == ArrayGeometry::Kind::Ula && g.n2 != 1)
    throw std::invalid_argument("geometry: ULA must have n2 = 1");
  if (!(g.spacing_over_lambda > 0)) throw std::invalid_argument("geometry: spacing must be > 0");
}

// phase ramp (1/sqrt(scale)) * exp(-j*2*pi*psi*i), i = 0..len-1
CVec phase_ramp(double psi, int len, double norm) {
  CVec v(len);
  for (int i = 0; i < len; ++i) {
    const double ph = -2.0 * kPi * psi * static_cast<double>(i);
    v(i) = cx(std::cos(ph), std::sin(ph)) * norm;
  }
  return v;
}

// grid of spatial directions predefined by the lens, (n - (N+1)/2)/N for n=1..N
double lens_direction(int n_onebased, int n_total) {
  return (static_cast<double>(n_onebased) - 0.5 * (n_total + 1)) / static_cast<double>(n_total);
}

}  // namespace

ArrayGeometry ArrayGeometry::ula(int n, double spacing) {
  ArrayGeometry g{Kind::Ula, n, 1, spacing};
  check_geometry(g);
  return g;
}

ArrayGeometry ArrayGeometry::upa(int n1, int n2, double spacing) {
  ArrayGeometry g{Kind::Upa, n1, n2, spacing};
  check_geometry(g);
  return g;
}

CVec steering_ula(const ArrayGeometry& geometry, double theta_rad) {
  check_geometry(geometry);
  if (geometry.kind != ArrayGeometry::Kind::Ula)
    throw std::invalid_argument("steering_ula: geometry is not a ULA");
  const int n = geometry.size();
  const double psi = geometry.spacing_over_lambda * std::sin(theta_rad);
  return phase_ramp(psi, n, 1.0 / std::sqrt(static_cast<double>(n)));
}

CVec steering_upa(const ArrayGeometry& geometry, double azi_rad, double ele_rad) {
  check_geometry(geometry);
  if (geometry.kind != ArrayGeometry::Kind::Upa)
    throw std::invalid_argument("steering_upa: geometry is not a UPA");
  const double d = geometry.spacing_over_lambda;
  const double psi_azi = d * std::sin(azi_rad) * std::sin(ele_rad);
  const double psi_ele = d * std::cos(ele_rad);
  const CVec ramp1 = phase_ramp(psi_azi, geometry.n1, 1.0);
  const CVec ramp2 = phase_ramp(psi_ele, geometry.n2, 1.0);
  // Kronecker product with the n2 ramp as the fast index
  const int n = geometry.size();
  CVec v(n);
  const double norm = 1.0 / std::sqrt(static_cast<double>(n));
  for (int i = 0; i < geometry.n1; ++i)
    for (int j = 0; j < geometry.n2; ++j) v(i * geometry.n2 + j) = ramp1(i) * ramp2(j) * norm;
  return v;
}

CMat lens_matrix(const ArrayGeometry& geometry) {
  check_geometry(geometry);
  if (geometry.kind == ArrayGeometry::Kind::Ula) {
    const int n = geometry.size();
    CMat u(n, n);
    const double norm = 1.0 / std::sqrt(static_cast<double>(n));
    for (int row = 0; row < n; ++row) {
      const double psi = lens_direction(row + 1, n);
      // row is the conjugate transpose of the steering vector at psi
      for (int i = 0; i < n; ++i) {
        const double ph = 2.0 * kPi * psi * static_cast<double>(i);
        u(row, i) = cx(std::cos(ph), std::sin(ph)) * norm;
      }
    }
    return u;
  }
  // UPA lens factors into the two one-dimensional grids, rows enumerated with
  // the elevation grid as the fast index to match the steering layout.
  const CMat u1 = lens_matrix(ArrayGeometry::ula(geometry.n1, geometry.spacing_over_lambda));
  const CMat u2 = lens_matrix(ArrayGeometry::ula(geometry.n2, geometry.spacing_over_lambda));
  const int n = geometry.size();
  CMat u(n, n);
  for (int a = 0; a < geometry.n1; ++a)
    for (int e = 0; e < geometry.n2; ++e)
      for (int i = 0; i < geometry.n1; ++i)
        for (int j = 0; j < geometry.n2; ++j)
          u(a * geometry.n2 + e, i * geometry.n2 + j) = u1(a, i) * u2(e, j);
  return u;
}

double dirichlet_sinc(double x, int n) {
  if (x == 0.0) return 1.0;
  return std::sin(static_cast<double>(n) * kPi * x) / (static_cast<double>(n) * std::sin(kPi * x));
}

ChannelSample sample_sv_channel(const ArrayGeometry& geometry, int num_paths, SplitRng& rng) {
  return sample_sv_channel(geometry, num_paths, rng, lens_matrix(geometry));
}

ChannelSample sample_sv_channel(const ArrayGeometry& geometry, int num_paths, SplitRng& rng,
                                const CMat& lens) {
  check_geometry(geometry);
  if (num_paths < 1) throw std::invalid_argument("sample_sv_channel: num_paths must be >= 1");
  const int n = geometry.size();
  ChannelSample s;
  s.geometry = geometry;
  s.paths.reserve(num_paths);
  s.spatial = CVec::Zero(n);
  const double scale = std::sqrt(static_cast<double>(n) / static_cast<double>(num_paths));
  for (int l = 0; l < num_paths; ++l) {
    PathParams p;
    p.gain = rng.cnormal();
    p.azimuth_rad = rng.uniform_open(-0.5 * kPi, 0.5 * kPi);
    p.elevation_rad = rng.uniform_open(-0.5 * kPi, 0.5 * kPi);
    const CVec a = geometry.kind == ArrayGeometry::Kind::Ula
                       ? steering_ula(geometry, p.azimuth_rad)
                       : steering_upa(geometry, p.azimuth_rad, p.elevation_rad);
    s.spatial += scale * p.gain * a;
    s.paths.push_back(p);
  }
  s.beamspace = lens * s.spatial;
  return s;
}

std::vector<ChannelSample> sample_sv_channels(const ArrayGeometry& geometry, int num_paths,
                                              int count, SplitRng& rng) {
  const CMat lens = lens_matrix(geometry);
  std::vector<ChannelSample> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(sample_sv_channel(geometry, num_paths, rng, lens));
  return out;
}

cx beamspace_element_closed_form(const ArrayGeometry& geometry, std::span<const PathParams> paths,
                                 int n) {
  check_geometry(geometry);
  if (geometry.kind != ArrayGeometry::Kind::Ula)
    throw std::invalid_argument("beamspace_element_closed_form: ULA only");
  if (geometry.spacing_over_lambda != 0.5)
    throw std::invalid_argument("beamspace_element_closed_form: requires d/lambda = 1/2");
  const int ntot = geometry.size();
  if (n < 0 || n >= ntot) throw std::invalid_argument("beamspace_element_closed_form: bad index");
  const double psi_bar = lens_direction(n + 1, ntot);
  const double scale =
      std::sqrt(static_cast<double>(ntot) / static_cast<double>(std::max<size_t>(paths.size(), 1)));
  cx acc = 0.0;
  for (const PathParams& p : paths) {
    const double psi = 0.5 * std::sin(p.azimuth_rad);
    const double delta = psi_bar - psi;
    // The aligned-array inner product carries the linear phase of the
    // zero-based element indexing on top of the Dirichlet kernel.
    const double ph = kPi * static_cast<double>(ntot - 1) * delta;
    acc += p.gain * cx(std::cos(ph), std::sin(ph)) * dirichlet_sinc(delta, ntot);
  }
  return scale * acc;
}

namespace {
constexpr char kChannelMagic[8] = {'B', 'S', 'C', 'H', 'A', 'N', '1', '\0'};
}

void export_channels(const std::string& path, std::span<const ChannelSample> samples) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("export_channels: cannot open " + path);
  f.write(kChannelMagic, 8);
  const std::uint64_t n = samples.empty() ? 0 : static_cast<std::uint64_t>(samples[0].spatial.size());
  io::write_u64(f, n);
  io::write_u64(f, samples.size());
  for (const ChannelSample& s : samples) {
    if (static_cast<std::uint64_t>(s.spatial.size()) != n)
      throw std::invalid_argument("export_channels: inconsistent record length");
    io::write_cvec(f, s.spatial);
  }
  if (!f) throw io_error("export_channels: write failed for " + path);
}

std::vector<ChannelSample> import_external_channels(const std::string& path,
                                                    const ArrayGeometry& geometry) {
  check_geometry(geometry);
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("import_external_channels: cannot open " + path);
  f.seekg(0, std::ios::end);
  const auto bytes = f.tellg();
  f.seekg(0, std::ios::beg);
  if (bytes == std::streampos(0)) return {};
  char magic[8];
  if (!f.read(magic, 8) || std::memcmp(magic, kChannelMagic, 8) != 0)
    throw io_error("import_external_channels: bad magic in " + path);
  const std::uint64_t n = io::read_u64(f);
  const std::uint64_t count = io::read_u64(f);
  if (!f) throw io_error("import_external_channels: truncated header in " + path);
  if (count > 0 && n != static_cast<std::uint64_t>(geometry.size()))
    throw std::invalid_argument("import_external_channels: file has N=" + std::to_string(n) +
                                ", geometry expects N=" + std::to_string(geometry.size()));
  const CMat lens = lens_matrix(geometry);
  std::vector<ChannelSample> out;
  out.reserve(count);
  for (std::uint64_t rec = 0; rec < count; ++rec) {
    CVec h(n);
    if (!io::read_cvec(f, h))
      throw io_error("import_external_channels: record " + std::to_string(rec) +
                     " malformed or truncated in " + path);
    ChannelSample s;
    s.geometry = geometry;
    s.spatial = std::move(h);
    s.beamspace = lens * s.spatial;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace beamscope
