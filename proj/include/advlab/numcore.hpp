#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

#include <Eigen/Core>

#include "advlab/error.hpp"

namespace advlab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Stream identifiers used to split one master seed into independent sources.
/// Coupled runs on neighboring datasets consume identical streams.
enum class Stream : std::uint64_t {
  Init = 1,
  Batch = 2,
  DeltaInit = 3,
  AttackRestart = 4,
  Data = 5,
  Evaluation = 6,
  Probe = 7,
};

/// Deterministic 64-bit generator keyed by (seed, stream_id).
///
/// Backed by std::mt19937_64 seeded through std::seed_seq; both are fully
/// specified by the standard, so sequences are bit-identical across
/// platforms. All derived variates (uniform doubles, Gaussians, indices) are
/// computed here rather than through <random> distributions, whose output is
/// implementation-defined.
class SeededRng {
 public:
  SeededRng(std::uint64_t seed, std::uint64_t stream_id);
  SeededRng(std::uint64_t seed, Stream stream)
      : SeededRng(seed, static_cast<std::uint64_t>(stream)) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1]; safe to take the logarithm of.
  double uniform_open_low();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller; always consumes exactly two draws.
  double gaussian();
  /// Uniform index in [0, n).
  std::size_t index(std::size_t n);

  /// Child generator for a sub-stream, e.g. one per Monte-Carlo trial.
  SeededRng split(std::uint64_t child) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
};

/// Mixes two 64-bit values into a well-spread seed (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

Vec gaussian_vector(SeededRng& rng, std::size_t dim, double scale = 1.0);

/// Uniform sample from the solid L2 ball. Draw count is fixed at 2*dim + 1
/// uniforms so that coupled streams never desynchronize.
Vec sample_uniform_l2_ball(SeededRng& rng, std::size_t dim, double radius);

/// Each coordinate independently uniform on [-radius, radius].
Vec sample_uniform_linf_ball(SeededRng& rng, std::size_t dim, double radius);

bool all_finite(const Vec& v);

inline double distance(const Vec& a, const Vec& b) { return (a - b).norm(); }

}  // namespace advlab
