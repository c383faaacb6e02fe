#include "sidlab/prob.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "sidlab/error.hpp"

namespace sidlab {

namespace {

constexpr double kSumTolerance = 1e-12;

void check_unit_interval(double t, const char* what) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw Error(ErrorKind::kDomain, std::string(what) + " must lie in [0, 1], got " + std::to_string(t));
  }
}

}  // namespace

CategoricalDist::CategoricalDist(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw Error(ErrorKind::kInvalidDistribution, "empty distribution");
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw Error(ErrorKind::kInvalidDistribution, "negative or non-finite probability");
    }
    sum += p;
  }
  if (!(sum > 0.0)) throw Error(ErrorKind::kInvalidDistribution, "distribution has zero mass");
  if (std::abs(sum - 1.0) > kSumTolerance) {
    // Guards drift in long products; a grossly unnormalized input is a caller bug.
    if (std::abs(sum - 1.0) > 1e-6) {
      throw Error(ErrorKind::kInvalidDistribution, "probabilities sum to " + std::to_string(sum));
    }
    for (double& p : probs_) p /= sum;
  }
}

CategoricalDist CategoricalDist::delta(std::size_t k, std::size_t label) {
  if (label >= k) throw Error(ErrorKind::kDimensionMismatch, "delta label out of range");
  std::vector<double> p(k, 0.0);
  p[label] = 1.0;
  return CategoricalDist(std::move(p));
}

CategoricalDist CategoricalDist::uniform(std::size_t k) {
  if (k == 0) throw Error(ErrorKind::kInvalidDistribution, "empty distribution");
  return CategoricalDist(std::vector<double>(k, 1.0 / static_cast<double>(k)));
}

CategoricalDist CategoricalDist::from_weights(std::vector<double> weights) {
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorKind::kInvalidDistribution, "bad weight");
    sum += w;
  }
  if (!(sum > 0.0)) throw Error(ErrorKind::kInvalidDistribution, "all weights are zero");
  for (double& w : weights) w /= sum;
  return CategoricalDist(std::move(weights));
}

CategoricalDist CategoricalDist::padded(std::size_t k) const {
  if (k < probs_.size()) throw Error(ErrorKind::kDimensionMismatch, "cannot shrink distribution");
  std::vector<double> p(probs_);
  p.resize(k, 0.0);
  return CategoricalDist(std::move(p));
}

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "cosine") return ScheduleKind::kCosine;
  if (name == "linear" || name == "linear-alpha") return ScheduleKind::kLinear;
  throw Error(ErrorKind::kConfigParse, "unknown schedule '" + std::string(name) + "'");
}

std::string_view to_string(ScheduleKind kind) {
  return kind == ScheduleKind::kCosine ? "cosine" : "linear";
}

double cosine_alpha(double t) {
  check_unit_interval(t, "t");
  if (t == 1.0) return 1.0;
  if (t == 0.0) return 0.0;
  const double c = std::cos((1.0 - t) * std::numbers::pi / 2.0);
  return c * c;
}

double cosine_alpha_dot(double t) {
  check_unit_interval(t, "t");
  if (t == 0.0) return 0.0;  // sin(pi) is not exactly zero in floating point
  // d/dt cos^2((1-t) pi/2) = (pi/2) sin((1-t) pi)
  return std::numbers::pi / 2.0 * std::sin((1.0 - t) * std::numbers::pi);
}

double Schedule::alpha(double t) const {
  if (kind_ == ScheduleKind::kCosine) return cosine_alpha(t);
  check_unit_interval(t, "t");
  return t;
}

double Schedule::alpha_dot(double t) const {
  if (kind_ == ScheduleKind::kCosine) return cosine_alpha_dot(t);
  check_unit_interval(t, "t");
  return 1.0;
}

std::uint64_t mix64(std::uint64_t x) noexcept {
  // splitmix64 finalizer
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream), key_(mix64(seed ^ mix64(stream ^ 0xD1B54A32D192ED03ULL))) {}

std::uint64_t RngStream::next_u64() {
  const std::uint64_t c = counter_++;
  return mix64(key_ ^ mix64(c + 0x8CB92BA72F3D8DD7ULL));
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::int64_t RngStream::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw Error(ErrorKind::kDomain, "empty integer range");
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  if (span == 0) return static_cast<std::int64_t>(next_u64());
  // Rejection keeps the draw exactly uniform.
  const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % span;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return lo + static_cast<std::int64_t>(x % span);
}

RngStream RngStream::split(std::uint64_t id) const {
  return RngStream(seed_, mix64(stream_ * 0x9E3779B97F4A7C15ULL ^ mix64(id)));
}

CategoricalDist mix(const CategoricalDist& data, const CategoricalDist& noise, double alpha) {
  if (data.size() != noise.size()) {
    throw Error(ErrorKind::kDimensionMismatch, "mix of distributions with different sizes");
  }
  check_unit_interval(alpha, "alpha");
  std::vector<double> p(data.size());
  for (std::size_t k = 0; k < p.size(); ++k) p[k] = alpha * data[k] + (1.0 - alpha) * noise[k];
  return CategoricalDist(std::move(p));
}

std::size_t sample_categorical(std::span<const double> probs, RngStream& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (probs[k] <= 0.0) continue;
    cum += probs[k];
    last_positive = k;
    if (u < cum) return k;
  }
  return last_positive;
}

std::size_t sample_categorical(const CategoricalDist& dist, RngStream& rng) {
  return sample_categorical(dist.probs(), rng);
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw Error(ErrorKind::kDimensionMismatch, "TV of different supports");
  double s = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) s += std::abs(p[k] - q[k]);
  return 0.5 * s;
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace sidlab
