#include "psar/common.hpp"
#include "psar/rng.hpp"

#include <boost/random/normal_distribution.hpp>
#include <boost/random/student_t_distribution.hpp>

#include <cmath>

namespace psar {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::ZeroOutDegree: return "ZeroOutDegree";
    case ErrorKind::ProbabilityOverflow: return "ProbabilityOverflow";
    case ErrorKind::SingularSystem: return "SingularSystem";
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::UnknownSpec: return "UnknownSpec";
    case ErrorKind::RankDeficientX: return "RankDeficientX";
    case ErrorKind::NoInteriorMax: return "NoInteriorMax";
    case ErrorKind::SingularCorrectedHessian: return "SingularCorrectedHessian";
    case ErrorKind::NonPositiveSigma2: return "NonPositiveSigma2";
    case ErrorKind::MaxIterExceeded: return "MaxIterExceeded";
    case ErrorKind::TooFewConverged: return "TooFewConverged";
    case ErrorKind::TooManyFailures: return "TooManyFailures";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

bool is_config_error(ErrorKind kind) noexcept {
  return kind == ErrorKind::ConfigError || kind == ErrorKind::IoError ||
         kind == ErrorKind::InvalidArgument || kind == ErrorKind::UnknownSpec;
}

NoiseLaw parse_noise_law(std::string_view name) {
  if (name == "normal") return NoiseLaw::Normal;
  if (name == "t6" || name == "scaled_t6") return NoiseLaw::ScaledT6;
  throw Error(ErrorKind::UnknownSpec, "noise law '" + std::string(name) + "'");
}

const char* to_string(NoiseLaw law) noexcept {
  return law == NoiseLaw::Normal ? "normal" : "t6";
}

std::uint64_t split_seed(std::uint64_t base, std::uint64_t index, std::uint64_t stream) noexcept {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ index) ^ (stream * 0xd1b54a32d192ed03ULL));
}

double draw_unit(Rng& rng, NoiseLaw law) {
  if (law == NoiseLaw::Normal) {
    boost::random::normal_distribution<double> dist;
    return dist(rng);
  }
  boost::random::student_t_distribution<double> dist(6.0);
  static const double scale = std::sqrt(2.0 / 3.0);
  return scale * dist(rng);
}

}  // namespace psar
