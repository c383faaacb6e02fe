#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace sidlab {

/// Probability vector over K labels. Entries are non-negative and sum to one.
class CategoricalDist {
 public:
  CategoricalDist() = default;

  /// Validates and, when the sum drifted by more than 1e-12, renormalizes.
  explicit CategoricalDist(std::vector<double> probs);

  static CategoricalDist delta(std::size_t k, std::size_t label);
  static CategoricalDist uniform(std::size_t k);
  /// Normalizes non-negative weights; throws when every weight is zero.
  static CategoricalDist from_weights(std::vector<double> weights);

  std::size_t size() const noexcept { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const noexcept { return probs_; }

  /// Same distribution over a vocabulary extended with zero-mass labels.
  CategoricalDist padded(std::size_t k) const;

 private:
  std::vector<double> probs_;
};

enum class ScheduleKind { kCosine, kLinear };

ScheduleKind parse_schedule_kind(std::string_view name);
std::string_view to_string(ScheduleKind kind);

/// Keep-probability schedule t -> alpha_t with alpha(0)=0 (noise) and alpha(1)=1 (data).
class Schedule {
 public:
  explicit Schedule(ScheduleKind kind = ScheduleKind::kCosine) : kind_(kind) {}

  ScheduleKind kind() const noexcept { return kind_; }
  double alpha(double t) const;
  double alpha_dot(double t) const;

 private:
  ScheduleKind kind_;
};

/// cos^2((1 - t) * pi / 2). Throws a domain error outside [0, 1].
double cosine_alpha(double t);
double cosine_alpha_dot(double t);

/// Counter-based generator keyed by (seed, stream). The draw sequence depends
/// only on those two integers and the number of draws taken, so it is identical
/// across runs and platforms. Child streams come from split().
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  std::uint64_t next_u64();
  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  /// Independent child stream; the derived id is a hash of (stream, id).
  RngStream split(std::uint64_t id) const;
  RngStream split(std::uint64_t a, std::uint64_t b) const { return split(a).split(b); }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x) noexcept;

/// alpha * data + (1 - alpha) * noise, entrywise.
CategoricalDist mix(const CategoricalDist& data, const CategoricalDist& noise, double alpha);

/// Inverse CDF over a single uniform draw.
std::size_t sample_categorical(const CategoricalDist& dist, RngStream& rng);
std::size_t sample_categorical(std::span<const double> probs, RngStream& rng);

double total_variation(std::span<const double> p, std::span<const double> q);
inline double total_variation(const CategoricalDist& p, const CategoricalDist& q) {
  return total_variation(p.probs(), q.probs());
}

double logit(double p);
double sigmoid(double x);

}  // namespace sidlab
