#include "beamscope/measurement.hpp"

#include <cstring>
#include <fstream>

#include "beamscope/io.hpp"

namespace beamscope {

SensingSystem gen_sensing(int n, int m, SplitRng& rng) {
  if (m < 1 || m > n) throw std::invalid_argument("gen_sensing: need 1 <= m <= n");
  SensingSystem sys;
  sys.n = n;
  sys.m = m;
  sys.a.resize(m, n);
  const double mag = 1.0 / std::sqrt(static_cast<double>(m));
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) sys.a(i, j) = (rng.next_u64() & 1u) ? mag : -mag;
  return sys;
}

CVec measure(const SensingSystem& sys, const CVec& hbeam, double snr_db, SplitRng& rng) {
  if (hbeam.size() != sys.n) throw std::invalid_argument("measure: channel length != N");
  const double sigma2 = snr_db_to_noise_var(snr_db);
  const double sigma = std::sqrt(sigma2);
  CVec noisy = hbeam;
  for (int i = 0; i < sys.n; ++i) noisy(i) += sigma * rng.cnormal();
  return sys.a * noisy;
}

MeasurementBatch build_dataset(std::span<const ChannelSample> channels, const SensingSystem& sys,
                               SnrPolicy policy, int count, SplitRng& rng) {
  if (channels.empty()) throw std::invalid_argument("build_dataset: empty channel source");
  if (count < 1) throw std::invalid_argument("build_dataset: count must be >= 1");
  MeasurementBatch batch;
  batch.y.resize(sys.m, count);
  batch.truth.resize(sys.n, count);
  batch.snr_db.resize(count);
  for (int d = 0; d < count; ++d) {
    const ChannelSample& ch = channels[d % channels.size()];
    if (ch.beamspace.size() != sys.n)
      throw std::invalid_argument("build_dataset: channel length != N");
    const double snr = policy.draw(rng);
    batch.snr_db(d) = snr;
    batch.truth.col(d) = ch.beamspace;
    batch.y.col(d) = measure(sys, ch.beamspace, snr, rng);
  }
  return batch;
}

namespace {
constexpr char kDatasetMagic[8] = {'B', 'S', 'D', 'S', 'E', 'T', '1', '\0'};
}

void save_dataset(const std::string& path, const MeasurementBatch& batch) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("save_dataset: cannot open " + path);
  f.write(kDatasetMagic, 8);
  io::write_u64(f, batch.n());
  io::write_u64(f, batch.m());
  io::write_u64(f, batch.size());
  for (int d = 0; d < batch.size(); ++d) {
    io::write_cvec(f, batch.y.col(d));
    io::write_cvec(f, batch.truth.col(d));
    io::write_f64(f, batch.snr_db(d));
  }
  if (!f) throw io_error("save_dataset: write failed for " + path);
}

MeasurementBatch load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("load_dataset: cannot open " + path);
  char magic[8];
  if (!f.read(magic, 8) || std::memcmp(magic, kDatasetMagic, 8) != 0)
    throw io_error("load_dataset: bad magic in " + path);
  const std::uint64_t n = io::read_u64(f);
  const std::uint64_t m = io::read_u64(f);
  const std::uint64_t count = io::read_u64(f);
  if (!f) throw io_error("load_dataset: truncated header in " + path);
  MeasurementBatch batch;
  batch.y.resize(m, count);
  batch.truth.resize(n, count);
  batch.snr_db.resize(count);
  CVec ybuf(m), tbuf(n);
  for (std::uint64_t d = 0; d < count; ++d) {
    if (!io::read_cvec(f, ybuf) || !io::read_cvec(f, tbuf))
      throw io_error("load_dataset: sample " + std::to_string(d) + " truncated in " + path);
    batch.y.col(d) = ybuf;
    batch.truth.col(d) = tbuf;
    batch.snr_db(d) = io::read_f64(f);
    if (!f) throw io_error("load_dataset: sample " + std::to_string(d) + " truncated in " + path);
  }
  return batch;
}

}  // namespace beamscope
