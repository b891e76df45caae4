#include "etg/rng.hpp"

#include <cmath>

namespace etg {

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

RngStream::RngStream(std::uint64_t seed, std::string_view name) {
  const std::uint64_t mix = fnv1a64(name);
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(mix),
                    static_cast<std::uint32_t>(mix >> 32)};
  gen_.seed(seq);
}

double RngStream::uniform() {
  // 53-bit mantissa; strictly inside [0, 1) so log() below is safe
  return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double RngStream::gaussian() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double tau = 6.283185307179586476925286766559;
  cached_ = r * std::sin(tau * u2);
  has_cached_ = true;
  return r * std::cos(tau * u2);
}

Eigen::MatrixXd RngStream::gaussian_matrix(Eigen::Index rows,
                                           Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      m(i, j) = gaussian();
    }
  }
  return m;
}

}  // namespace etg
