#pragma once

#include "mivi/tensor.hpp"

#include <cstdint>
#include <random>
#include <variant>

namespace mivi {

/// Seeded random stream. Every draw comes from mt19937_64 and hand-written
/// transforms, so a given (seed, stream) pair produces the same sequence on
/// every platform.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal();
  /// Gamma with shape and rate (mean shape / rate).
  double gamma(double shape, double rate);
  double beta(double a, double b);
  /// Weibull with scale a and shape b: a (-log u)^(1/b).
  double weibull(double scale, double shape);
  /// Poisson with the given mean.
  int poisson(double mean);
  /// Polya-Gamma PG(1, c).
  double polya_gamma(double c);
  std::uint64_t next_u64() { return engine_(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  Vec normal_vec(Eigen::Index n);

  /// A stream derived deterministically from this one's seed.
  RngStream split(std::uint64_t stream) const { return RngStream(seed_, stream); }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Mixes a seed and a stream id into an engine seed (splitmix64 finalizer).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Truncation depth of the PG(1, c) series.
inline constexpr int kPolyaGammaTerms = 200;

/// Moments of PG(1, c).
double polya_gamma_mean(double c);
double polya_gamma_variance(double c);

namespace dist {
struct Gaussian { double mean; double variance; };
struct Gamma { double shape; double rate; };
struct Beta { double a; double b; };
struct Uniform01 {};
struct Weibull { double scale; double shape; };
struct PolyaGamma { double c; };
}  // namespace dist

using Distribution = std::variant<dist::Gaussian, dist::Gamma, dist::Beta, dist::Uniform01,
                                  dist::Weibull, dist::PolyaGamma>;

/// Draws `n` iid values. Throws std::invalid_argument on an invalid parameter.
Vec sample(const Distribution& d, RngStream& rng, Eigen::Index n = 1);

/// Weibull reparameterization used by the bridge kernel: scale * exp(log(-log u) / shape).
inline double weibull_from_uniform(double scale, double shape, double u) {
  return scale * std::exp(std::log(-std::log(u)) / shape);
}

}  // namespace mivi
