#include "advlab/numcore.hpp"

#include <cmath>
#include <numbers>

namespace advlab {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidDimension: return "invalid-dimension";
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::InvalidConfig: return "invalid-config";
    case ErrorKind::DegenerateGradient: return "degenerate-gradient";
    case ErrorKind::InvalidTrace: return "invalid-trace";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace {

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream_id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream_id),
                    static_cast<std::uint32_t>(stream_id >> 32), 0x61647631u};
  return std::mt19937_64(seq);
}

}  // namespace

SeededRng::SeededRng(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(make_engine(seed, stream_id)) {}

double SeededRng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform_open_low() {
  return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
}

double SeededRng::gaussian() {
  const double u1 = uniform_open_low();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t SeededRng::index(std::size_t n) {
  require(n > 0, ErrorKind::InvalidInput, "index range must be nonempty");
  const unsigned __int128 wide = static_cast<unsigned __int128>(engine_()) * n;
  return static_cast<std::size_t>(wide >> 64);
}

SeededRng SeededRng::split(std::uint64_t child) const {
  return SeededRng(mix_seed(seed_, child), stream_id_);
}

Vec gaussian_vector(SeededRng& rng, std::size_t dim, double scale) {
  Vec v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = scale * rng.gaussian();
  return v;
}

Vec sample_uniform_l2_ball(SeededRng& rng, std::size_t dim, double radius) {
  require(dim >= 1, ErrorKind::InvalidDimension, "ball dimension must be positive");
  require(radius >= 0.0 && std::isfinite(radius), ErrorKind::InvalidInput,
          "ball radius must be finite and nonnegative");
  Vec direction = gaussian_vector(rng, dim);
  const double u = rng.uniform();
  const double norm = direction.norm();
  if (norm == 0.0) {
    // probability zero; keeps the draw count fixed
    direction.setZero();
    direction[0] = 1.0;
  } else {
    direction /= norm;
  }
  const double r = radius * std::pow(u, 1.0 / static_cast<double>(dim));
  Vec v = r * direction;
  // rounding can overshoot the sphere by an ulp
  const double n = v.norm();
  if (n > radius) v *= radius / n;
  return v;
}

Vec sample_uniform_linf_ball(SeededRng& rng, std::size_t dim, double radius) {
  require(dim >= 1, ErrorKind::InvalidDimension, "ball dimension must be positive");
  require(radius >= 0.0 && std::isfinite(radius), ErrorKind::InvalidInput,
          "ball radius must be finite and nonnegative");
  Vec v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    v[i] = std::clamp(rng.uniform(-radius, radius), -radius, radius);
  }
  return v;
}

bool all_finite(const Vec& v) { return v.allFinite(); }

}  // namespace advlab
