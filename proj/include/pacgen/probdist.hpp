#pragma once

// Fully factorized Gaussians over network parameters: posterior and prior
// for the PAC-Bayes certificates.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "pacgen/error.hpp"
#include "pacgen/lipnet.hpp"
#include "pacgen/rng.hpp"

namespace pacgen::probdist {

using lipnet::ParamVector;

struct DiagonalGaussian {
  ParamVector mean;
  Eigen::VectorXd log_std;

  Eigen::Index size() const { return mean.size(); }
  Eigen::VectorXd std() const { return log_std.array().exp().matrix(); }

  void validate() const {
    detail::require(mean.size() == log_std.size(), "mean and log_std lengths differ");
    detail::require(mean.allFinite() && log_std.allFinite(), "Gaussian parameters must be finite");
  }
};

/// How a scalar sigma0 is read when building the isotropic prior.
enum class Sigma0Meaning { kStdDev, kVariance };

inline DiagonalGaussian isotropic_prior(const ParamVector& mean, double sigma0,
                                        Sigma0Meaning meaning = Sigma0Meaning::kStdDev) {
  detail::require(sigma0 > 0.0 && std::isfinite(sigma0), "sigma0 must be positive");
  const double log_std = meaning == Sigma0Meaning::kStdDev ? std::log(sigma0) : 0.5 * std::log(sigma0);
  return {mean, Eigen::VectorXd::Constant(mean.size(), log_std)};
}

/// Draw mean + std * eps together with eps, so gradients can be pushed back
/// to (mean, log_std).
struct ReparamSample {
  ParamVector value;
  Eigen::VectorXd noise;
};

template <class Engine>
ReparamSample sample_reparam(const DiagonalGaussian& dist, Engine& engine) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ReparamSample s;
  s.noise.resize(dist.size());
  for (Eigen::Index i = 0; i < dist.size(); ++i) s.noise(i) = normal(engine);
  s.value = dist.mean + dist.std().cwiseProduct(s.noise);
  return s;
}

/// Deterministic per seed.
inline ParamVector sample_params(const DiagonalGaussian& dist, std::uint64_t seed) {
  dist.validate();
  auto engine = rng::stream(seed, rng::Tag::kUser);
  return sample_reparam(dist, engine).value;
}

struct GaussianGradient {
  Eigen::VectorXd mean;
  Eigen::VectorXd log_std;
};

/// Pulls dL/d(sample) back through sample = mean + exp(log_std) * noise.
inline GaussianGradient reparam_gradient(const DiagonalGaussian& dist, const ReparamSample& s,
                                         const Eigen::VectorXd& grad_value) {
  return {grad_value, grad_value.cwiseProduct(dist.std()).cwiseProduct(s.noise)};
}

/// KL(q || p) = sum_i log(sp/sq) + (sq^2 + (mq - mp)^2) / (2 sp^2) - 1/2.
inline double kl(const DiagonalGaussian& q, const DiagonalGaussian& p) {
  q.validate();
  p.validate();
  detail::require(q.size() == p.size(), "kl: dimension mismatch");
  const auto log_ratio = (p.log_std - q.log_std).array();
  const auto var_ratio = (2.0 * (q.log_std - p.log_std)).array().exp();
  const auto scaled_gap = ((q.mean - p.mean).array() * (-p.log_std).array().exp()).square();
  return (log_ratio + 0.5 * (var_ratio + scaled_gap) - 0.5).sum();
}

/// Gradient of kl(q, p) with respect to q's (mean, log_std).
inline GaussianGradient kl_gradient(const DiagonalGaussian& q, const DiagonalGaussian& p) {
  detail::require(q.size() == p.size(), "kl: dimension mismatch");
  const Eigen::ArrayXd inv_var_p = (-2.0 * p.log_std).array().exp();
  GaussianGradient g;
  g.mean = ((q.mean - p.mean).array() * inv_var_p).matrix();
  g.log_std = ((2.0 * (q.log_std - p.log_std)).array().exp() - 1.0).matrix();
  return g;
}

inline double log_density(const DiagonalGaussian& d, const ParamVector& x) {
  detail::require(x.size() == d.size(), "log_density: dimension mismatch");
  const auto z = ((x - d.mean).array() * (-d.log_std).array().exp());
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  return (-0.5 * z.square() - d.log_std.array() - half_log_2pi).sum();
}

namespace impl {

// Per-coordinate log density without the shared 2*pi constant.
inline Eigen::ArrayXd coordinate_log_density(const DiagonalGaussian& d, const ParamVector& x) {
  const Eigen::ArrayXd z = (x - d.mean).array() * (-d.log_std).array().exp();
  return -0.5 * z.square() - d.log_std.array();
}

}  // namespace impl

/// log q(g) - log p(g), accumulated coordinate-wise; ratio(q, p) is exactly
/// -ratio(p, q).
inline double log_density_ratio(const DiagonalGaussian& q, const DiagonalGaussian& p, const ParamVector& g) {
  q.validate();
  p.validate();
  detail::require(q.size() == p.size() && g.size() == q.size(), "log_density_ratio: dimension mismatch");
  const Eigen::ArrayXd lq = impl::coordinate_log_density(q, g);
  const Eigen::ArrayXd lp = impl::coordinate_log_density(p, g);
  return (lq - lp).sum();
}

// Serialization: CSV with header `mean,log_std`, one parameter per line.

inline void write_csv(std::ostream& os, const DiagonalGaussian& d) {
  os << "mean,log_std\n";
  os.precision(17);
  for (Eigen::Index i = 0; i < d.size(); ++i) os << d.mean(i) << ',' << d.log_std(i) << '\n';
}

inline DiagonalGaussian read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("mean,log_std", 0) != 0) {
    throw ConfigError("Gaussian CSV must start with header 'mean,log_std'");
  }
  std::vector<double> means;
  std::vector<double> logs;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ConfigError("malformed Gaussian CSV line: " + line);
    try {
      means.push_back(std::stod(line.substr(0, comma)));
      logs.push_back(std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw ConfigError("non-numeric entry in Gaussian CSV: " + line);
    }
  }
  const auto n = static_cast<Eigen::Index>(means.size());
  return {Eigen::Map<const Eigen::VectorXd>(means.data(), n), Eigen::Map<const Eigen::VectorXd>(logs.data(), n)};
}

}  // namespace pacgen::probdist
