#include "seven/score.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "seven/error.hpp"
#include "seven/rng.hpp"

namespace seven {

namespace {
constexpr ScoreVariant kAllVariants[] = {
    ScoreVariant::Seven, ScoreVariant::FirstOnly, ScoreVariant::SecondOnly,
    ScoreVariant::Product, ScoreVariant::Snip, ScoreVariant::Magnitude,
    ScoreVariant::Random};

void check_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw NumericError(std::string("score: non-finite ") + what);
}

std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

void write_vector(std::ostream& out, const char* tag, const std::vector<double>& v) {
  out << tag;
  for (double x : v) out << ' ' << hex(x);
  out << '\n';
}

std::vector<double> read_vector(std::istream& in, const char* tag, std::size_t n) {
  std::string line;
  if (!std::getline(in, line)) throw IoError(std::string("score checkpoint: missing ") + tag);
  std::istringstream ls(line);
  std::string t;
  ls >> t;
  if (t != tag) throw IoError(std::string("score checkpoint: expected ") + tag);
  std::vector<double> v;
  v.reserve(n);
  std::string tok;
  while (ls >> tok) v.push_back(std::strtod(tok.c_str(), nullptr));
  if (v.size() != n) throw IoError(std::string("score checkpoint: wrong length for ") + tag);
  return v;
}
}  // namespace

std::string_view to_string(ScoreVariant v) {
  switch (v) {
    case ScoreVariant::Seven: return "seven";
    case ScoreVariant::FirstOnly: return "first_only";
    case ScoreVariant::SecondOnly: return "second_only";
    case ScoreVariant::Product: return "product";
    case ScoreVariant::Snip: return "snip";
    case ScoreVariant::Magnitude: return "magnitude";
    case ScoreVariant::Random: return "random";
  }
  return "?";
}

ScoreVariant parse_score_variant(std::string_view name) {
  for (auto v : kAllVariants)
    if (to_string(v) == name) return v;
  throw ConfigError("variant", "unknown score variant '" + std::string(name) + "'");
}

bool is_accumulated(ScoreVariant v) {
  return v == ScoreVariant::Seven || v == ScoreVariant::FirstOnly ||
         v == ScoreVariant::SecondOnly || v == ScoreVariant::Product;
}

void ScoreHyper::validate() const {
  if (!(alpha1 > 0.0 && alpha1 < 1.0)) throw ConfigError("alpha1", "must lie in (0, 1)");
  if (!(alpha2 > 0.0 && alpha2 < 1.0)) throw ConfigError("alpha2", "must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon", "must be positive");
}

ScoreState::ScoreState(std::size_t size, ScoreHyper hyper, ScoreVariant variant)
    : hyper_(hyper),
      variant_(variant),
      mean_(size, 0.0),
      mean_sq_(size, 0.0),
      score_(size, 0.0) {
  hyper_.validate();
  if (!is_accumulated(variant))
    throw ConfigError("variant", std::string(to_string(variant)) +
                                     " is a one-shot criterion, not an accumulated score");
}

void ScoreState::check_length(std::size_t n, const char* what) const {
  if (n != mean_.size())
    throw ShapeError(std::string("score: ") + what + " has length " + std::to_string(n) +
                     ", state has " + std::to_string(mean_.size()));
}

void ScoreState::update(std::span<const double> grad) {
  check_length(grad.size(), "gradient");
  check_finite(grad, "gradient");
  const double a1 = hyper_.alpha1, a2 = hyper_.alpha2;
  for (std::size_t j = 0; j < grad.size(); ++j) {
    mean_[j] = a1 * mean_[j] + (1.0 - a1) * grad[j];
    mean_sq_[j] = a2 * mean_sq_[j] + (1.0 - a2) * grad[j] * grad[j];
  }
  ++step_;
}

Moments ScoreState::moments() const {
  if (step_ == 0) throw Error("score: bias correction needs at least one update");
  const double i = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(hyper_.alpha1, i);
  const double c2 = 1.0 - std::pow(hyper_.alpha2, i);
  Moments m{std::vector<double>(size()), std::vector<double>(size())};
  for (std::size_t j = 0; j < size(); ++j) {
    m.first[j] = mean_[j] / c1;
    m.second[j] = std::sqrt(mean_sq_[j] / c2 + hyper_.epsilon);
  }
  return m;
}

std::vector<double> ScoreState::correction() const {
  Moments m = moments();
  switch (variant_) {
    case ScoreVariant::Seven:
      for (std::size_t j = 0; j < size(); ++j) m.first[j] /= m.second[j];
      return std::move(m.first);
    case ScoreVariant::FirstOnly:
      return std::move(m.first);
    case ScoreVariant::SecondOnly:
      return std::move(m.second);
    case ScoreVariant::Product:
      for (std::size_t j = 0; j < size(); ++j) m.first[j] *= m.second[j];
      return std::move(m.first);
    default:
      break;
  }
  throw Error("score: variant has no correction");
}

void ScoreState::accumulate(std::span<const double> theta, std::span<const double> grad) {
  check_length(theta.size(), "theta");
  check_length(grad.size(), "gradient");
  const std::vector<double> mu = correction();
  for (std::size_t j = 0; j < size(); ++j) score_[j] += std::abs(theta[j] * (grad[j] * mu[j]));
}

void ScoreState::save(std::ostream& out) const {
  out << "SEVENSCORE v1 " << size() << ' ' << step_ << ' ' << to_string(variant_) << ' '
      << hex(hyper_.alpha1) << ' ' << hex(hyper_.alpha2) << ' ' << hex(hyper_.epsilon) << '\n';
  write_vector(out, "mean", mean_);
  write_vector(out, "mean_sq", mean_sq_);
  write_vector(out, "score", score_);
}

ScoreState ScoreState::load(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw IoError("score checkpoint: empty input");
  std::istringstream hs(line);
  std::string magic, version, variant, a1, a2, eps;
  std::size_t size = 0, step = 0;
  if (!(hs >> magic >> version >> size >> step >> variant >> a1 >> a2 >> eps) ||
      magic != "SEVENSCORE" || version != "v1")
    throw IoError("score checkpoint: bad header");
  ScoreHyper hyper{std::strtod(a1.c_str(), nullptr), std::strtod(a2.c_str(), nullptr),
                   std::strtod(eps.c_str(), nullptr)};
  ScoreState s(size, hyper, parse_score_variant(variant));
  s.step_ = step;
  s.mean_ = read_vector(in, "mean", size);
  s.mean_sq_ = read_vector(in, "mean_sq", size);
  s.score_ = read_vector(in, "score", size);
  return s;
}

std::vector<double> baseline_score(ScoreVariant variant, std::span<const double> theta,
                                   std::span<const double> grad, std::uint64_t seed) {
  std::vector<double> out(theta.size());
  switch (variant) {
    case ScoreVariant::Magnitude:
      for (std::size_t j = 0; j < theta.size(); ++j) out[j] = std::abs(theta[j]);
      return out;
    case ScoreVariant::Snip:
      if (grad.empty()) throw Error("score: snip needs a batch gradient");
      if (grad.size() != theta.size())
        throw ShapeError("score: snip gradient length " + std::to_string(grad.size()) +
                         " vs theta " + std::to_string(theta.size()));
      for (std::size_t j = 0; j < theta.size(); ++j) out[j] = std::abs(theta[j] * grad[j]);
      return out;
    case ScoreVariant::Random: {
      Rng rng(seed);
      for (auto& x : out) x = rng.uniform();
      return out;
    }
    default:
      break;
  }
  throw Error("score: " + std::string(to_string(variant)) + " is not a one-shot criterion");
}

}  // namespace seven
