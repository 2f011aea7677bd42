#include "mivi/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mivi {

namespace {

constexpr double kPi = std::numbers::pi;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// log of a Gamma(shape, 1) draw; stays finite for tiny shapes where the draw
// itself underflows.
double log_gamma_draw(RngStream& rng, double shape) {
  if (shape < 1.0) {
    const double u = rng.uniform();
    return log_gamma_draw(rng, shape + 1.0) + std::log(u) / shape;
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return std::log(d * v);
  }
}

// Σ_{k>K} 1/((k-1/2)^2 + a^2) and Σ_{k>K} 1/((k-1/2)^2 + a^2)^2 by the midpoint
// integral from K to infinity.
double tail_sum1(double a, double k) {
  if (a < 1e-8 * k) return 1.0 / k;
  return std::atan(a / k) / a;
}

double tail_sum2(double a, double k) {
  const double u = a / k;
  if (u < 1e-2) {
    return 1.0 / (3.0 * k * k * k) - 2.0 * a * a / (5.0 * std::pow(k, 5));
  }
  return std::atan(u) / (2.0 * a * a * a) - k / (2.0 * a * a * (k * k + a * a));
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), engine_(mix_seed(seed, stream)) {}

double RngStream::uniform() {
  // 53 random bits, shifted by half a unit so 0 and 1 are never produced.
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u = 0.0;
  double v = 0.0;
  double s = 0.0;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_ = v * f;
  has_spare_ = true;
  return u * f;
}

double RngStream::gamma(double shape, double rate) {
  if (!(shape > 0.0) || !(rate > 0.0) || !std::isfinite(shape) || !std::isfinite(rate)) {
    throw std::invalid_argument("gamma: shape and rate must be positive");
  }
  if (shape == 1.0) return -std::log(uniform()) / rate;
  return std::exp(log_gamma_draw(*this, shape)) / rate;
}

double RngStream::beta(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("beta: parameters must be positive");
  const double lx = log_gamma_draw(*this, a);
  const double ly = log_gamma_draw(*this, b);
  return 1.0 / (1.0 + std::exp(ly - lx));
}

double RngStream::weibull(double scale, double shape) {
  if (!(scale > 0.0) || !(shape > 0.0)) {
    throw std::invalid_argument("weibull: scale and shape must be positive");
  }
  return weibull_from_uniform(scale, shape, uniform());
}

double RngStream::polya_gamma(double c) {
  if (!std::isfinite(c)) throw std::invalid_argument("polya_gamma: tilt must be finite");
  const double a2 = c * c / (4.0 * kPi * kPi);
  double sum = 0.0;
  for (int k = 1; k <= kPolyaGammaTerms; ++k) {
    const double h = k - 0.5;
    sum += -std::log(uniform()) / (h * h + a2);
  }
  double omega = sum / (2.0 * kPi * kPi);

  // Remaining terms replaced by a Gamma with the same first two moments.
  const double a = std::sqrt(a2);
  const double tail_mean = tail_sum1(a, kPolyaGammaTerms) / (2.0 * kPi * kPi);
  const double tail_var = tail_sum2(a, kPolyaGammaTerms) / (4.0 * kPi * kPi * kPi * kPi);
  if (tail_mean > 0.0 && tail_var > 0.0) {
    omega += gamma(tail_mean * tail_mean / tail_var, tail_mean / tail_var);
  }
  return omega;
}

int RngStream::poisson(double mean) {
  if (!(mean >= 0.0) || !std::isfinite(mean)) throw std::invalid_argument("poisson: mean must be non-negative");
  // Multiplication method on chunks of mean ≤ 30; a sum of Poissons is Poisson.
  int total = 0;
  while (mean > 0.0) {
    const double chunk = std::min(mean, 30.0);
    mean -= chunk;
    const double limit = std::exp(-chunk);
    double prod = uniform();
    while (prod > limit) {
      ++total;
      prod *= uniform();
    }
  }
  return total;
}

std::uint64_t RngStream::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("below: empty range");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % n;
}

Vec RngStream::normal_vec(Eigen::Index n) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
  return v;
}

double polya_gamma_mean(double c) {
  c = std::abs(c);
  if (c < 1e-4) return 0.25 - c * c / 48.0;
  return std::tanh(0.5 * c) / (2.0 * c);
}

double polya_gamma_variance(double c) {
  c = std::abs(c);
  if (c < 0.1) {
    const double c2 = c * c;
    const double ch = std::cosh(0.5 * c);
    return (1.0 / 6.0 + c2 / 120.0 + c2 * c2 / 5040.0) / (4.0 * ch * ch);
  }
  return (std::tanh(0.5 * c) - c / (std::cosh(c) + 1.0)) / (2.0 * c * c * c);
}

Vec sample(const Distribution& d, RngStream& rng, Eigen::Index n) {
  Vec out(n);
  std::visit(
      [&](const auto& spec) {
        using T = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<T, dist::Gaussian>) {
          if (!(spec.variance >= 0.0) || !std::isfinite(spec.mean)) {
            throw std::invalid_argument("Gaussian: variance must be non-negative");
          }
          const double sd = std::sqrt(spec.variance);
          for (Eigen::Index i = 0; i < n; ++i) out[i] = spec.mean + sd * rng.normal();
        } else if constexpr (std::is_same_v<T, dist::Gamma>) {
          for (Eigen::Index i = 0; i < n; ++i) out[i] = rng.gamma(spec.shape, spec.rate);
        } else if constexpr (std::is_same_v<T, dist::Beta>) {
          for (Eigen::Index i = 0; i < n; ++i) out[i] = rng.beta(spec.a, spec.b);
        } else if constexpr (std::is_same_v<T, dist::Uniform01>) {
          for (Eigen::Index i = 0; i < n; ++i) out[i] = rng.uniform();
        } else if constexpr (std::is_same_v<T, dist::Weibull>) {
          for (Eigen::Index i = 0; i < n; ++i) out[i] = rng.weibull(spec.scale, spec.shape);
        } else if constexpr (std::is_same_v<T, dist::PolyaGamma>) {
          for (Eigen::Index i = 0; i < n; ++i) out[i] = rng.polya_gamma(spec.c);
        }
      },
      d);
  return out;
}

}  // namespace mivi
