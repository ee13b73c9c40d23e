#pragma once

// PAC-Bayesian risk certificates for IPM-trained generators.
//
// Every bound has the same shape
//
//   gap = (complexity + log(1/delta)) / lambda + concentration
//
// where complexity is KL(rho || pi) (aggregate bounds) or log d rho / d pi (g)
// (disintegrated bounds) and the concentration term depends on how the
// bounded-differences constants are obtained:
//
//   instance-space diameter D      lambda D^2 / (4 n)
//   K-Lipschitz latent pushforward lambda K^2 d_Z / (4 n)
//   [-1, 1]-valued critics         4 lambda / n
//
// A certificate adds the empirical risk to the gap. Logs are natural.

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "pacgen/error.hpp"
#include "pacgen/ipm.hpp"
#include "pacgen/rng.hpp"
#include "pacgen/synthdata.hpp"

namespace pacgen::bounds {

struct Diameter {
  double delta;  // diameter of the instance space
};

struct Manifold {
  double lipschitz;  // K, Lipschitz constant of the true and candidate generators
  int latent_dim;    // d_Z, latent space [0,1]^{d_Z}
};

struct TotalVariation {};

using SlackKind = std::variant<Diameter, Manifold, TotalVariation>;

struct CertificateInputs {
  double empirical_risk = 0.0;
  double complexity = 0.0;
  double lambda = 1.0;
  double delta = 0.05;
  std::size_t n = 1;
  SlackKind slack = Diameter{1.0};

  void validate() const {
    detail::require(std::isfinite(empirical_risk), "empirical risk must be finite");
    detail::require(std::isfinite(complexity), "complexity must be finite");
    detail::require(lambda > 0.0 && std::isfinite(lambda), "lambda must be positive");
    detail::require(delta > 0.0 && delta < 1.0, "delta must lie in (0, 1)");
    detail::require(n >= 1, "n must be at least 1");
    std::visit(
        [](const auto& s) {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, Diameter>) {
            detail::require(s.delta > 0.0 && std::isfinite(s.delta), "diameter must be positive");
          } else if constexpr (std::is_same_v<S, Manifold>) {
            detail::require(s.lipschitz > 0.0 && std::isfinite(s.lipschitz), "K must be positive");
            detail::require(s.latent_dim >= 1, "latent dimension must be at least 1");
          }
        },
        slack);
  }
};

struct Certificate {
  double risk_term = 0.0;
  double complexity_term = 0.0;     // complexity / lambda
  double confidence_term = 0.0;     // log(1/delta) / lambda
  double concentration_term = 0.0;  // slack-dependent
  double total = 0.0;

  double gap() const { return complexity_term + confidence_term + concentration_term; }
};

/// lambda * (squared bounded-differences scale) / (4 n).
inline double concentration_term(const SlackKind& slack, double lambda, std::size_t n) {
  const double scale_sq = std::visit(
      [](const auto& s) -> double {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, Diameter>) {
          return s.delta * s.delta;
        } else if constexpr (std::is_same_v<S, Manifold>) {
          return s.lipschitz * s.lipschitz * s.latent_dim;
        } else {
          return 16.0;
        }
      },
      slack);
  return lambda * scale_sq / (4.0 * static_cast<double>(n));
}

/// Splits the certificate into its four terms; total is their sum.
inline Certificate certificate(const CertificateInputs& in) {
  in.validate();
  Certificate c;
  c.risk_term = in.empirical_risk;
  c.complexity_term = in.complexity / in.lambda;
  c.confidence_term = std::log(1.0 / in.delta) / in.lambda;
  c.concentration_term = concentration_term(in.slack, in.lambda, in.n);
  c.total = c.risk_term + c.complexity_term + c.confidence_term + c.concentration_term;
  if (!std::isfinite(c.total)) throw InvalidArgument("certificate is not finite");
  return c;
}

namespace impl {

inline double gap(double complexity, double lambda, double delta, std::size_t n, SlackKind slack) {
  return certificate({0.0, complexity, lambda, delta, n, slack}).gap();
}

}  // namespace impl

/// Aggregate bound with the instance-space diameter.
inline double gap_wasserstein(double kl, double lambda, double delta, std::size_t n, double diameter) {
  return impl::gap(kl, lambda, delta, n, Diameter{diameter});
}

/// Same form with log d rho / d pi (g) for a single sampled generator; the
/// log ratio may be negative.
inline double gap_disintegrated(double log_ratio, double lambda, double delta, std::size_t n, double diameter) {
  return impl::gap(log_ratio, lambda, delta, n, Diameter{diameter});
}

/// Latent-manifold variant: generators K-Lipschitz on [0,1]^{d_Z}.
inline double gap_manifold(double complexity, double lambda, double delta, std::size_t n, double lipschitz,
                           int latent_dim) {
  return impl::gap(complexity, lambda, delta, n, Manifold{lipschitz, latent_dim});
}

/// Critics valued in [-1, 1] (total variation).
inline double gap_tv(double complexity, double lambda, double delta, std::size_t n) {
  return impl::gap(complexity, lambda, delta, n, TotalVariation{});
}

// ---------------------------------------------------------------------------
// Choice of lambda

struct SqrtN {};
struct LinearN {};
struct NOver1024 {};
/// Minimizer of the diameter gap for a given complexity:
/// lambda* = (2 / D) sqrt(n (complexity + log(1/delta))).
struct Optimal {
  double complexity = 0.0;
  double diameter = 1.0;
  double delta = 0.05;
};

/// A user-supplied constant.
struct Fixed {
  double value = 1.0;
};

using LambdaRule = std::variant<SqrtN, LinearN, NOver1024, Optimal, Fixed>;

inline double lambda_rule(const LambdaRule& rule, std::size_t n) {
  detail::require(n >= 1, "lambda rule needs n >= 1");
  const double nd = static_cast<double>(n);
  return std::visit(
      [nd](const auto& r) -> double {
        using R = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<R, SqrtN>) {
          return std::sqrt(nd);
        } else if constexpr (std::is_same_v<R, LinearN>) {
          return nd;
        } else if constexpr (std::is_same_v<R, NOver1024>) {
          return nd / 1024.0;
        } else if constexpr (std::is_same_v<R, Fixed>) {
          detail::require(r.value > 0.0 && std::isfinite(r.value), "fixed lambda must be positive");
          return r.value;
        } else {
          const double budget = r.complexity + std::log(1.0 / r.delta);
          detail::require(budget > 0.0, "optimal lambda needs complexity + log(1/delta) > 0");
          detail::require(r.diameter > 0.0, "optimal lambda needs a positive diameter");
          return 2.0 / r.diameter * std::sqrt(nd * budget);
        }
      },
      rule);
}

inline std::string lambda_rule_name(const LambdaRule& rule) {
  return std::visit(
      [](const auto& r) -> std::string {
        using R = std::decay_t<decltype(r)>;
        if constexpr (std::is_same_v<R, SqrtN>) return "sqrt_n";
        else if constexpr (std::is_same_v<R, LinearN>) return "n";
        else if constexpr (std::is_same_v<R, NOver1024>) return "n_over_1024";
        else if constexpr (std::is_same_v<R, Fixed>) return std::to_string(r.value);
        else return "optimal";
      },
      rule);
}

// ---------------------------------------------------------------------------
// Exponential-moment check

struct ExpMomentResult {
  double estimate = 1.0;   // MC mean of exp(lambda (E d - d))
  double std_error = 0.0;  // of the estimate
  double bound = 1.0;      // exp(lambda^2 D^2 / (4 n))
  double mean_ipm = 0.0;   // MC estimate of E d used inside the exponent
  bool pass = true;
};

/// exp(lambda^2 D^2 / (4 n)).
inline double exp_moment_bound(double lambda, double diameter, std::size_t n) {
  detail::require(n >= 1, "exp_moment_bound needs n >= 1");
  return std::exp(lambda * lambda * diameter * diameter / (4.0 * static_cast<double>(n)));
}

/// Monte-Carlo check of E exp[lambda (E d_F(P_n, Q_n) - d_F(P_n, Q_n))] <=
/// exp(lambda^2 D^2 / 4n) for a finite (exact-sup) family. E d_F is
/// estimated from `trials` independent draws, the moment from another
/// `trials` fresh draws. Passes iff estimate <= bound * (1 + 3 se / estimate).
/// D is the larger of the two truncation diameters.
inline ExpMomentResult exp_moment_check(const std::vector<ipm::PointFunction>& family,
                                        const synthdata::MixtureSpec& spec_p, const synthdata::MixtureSpec& spec_q,
                                        std::size_t n, double lambda, std::size_t trials, std::uint64_t seed) {
  detail::require(!family.empty(), "exp_moment_check needs a non-empty family");
  detail::require(n >= 1, "exp_moment_check needs n >= 1");
  detail::require(lambda >= 0.0, "exp_moment_check needs lambda >= 0");
  detail::require(trials >= 2, "exp_moment_check needs at least two trials");
  const double diam = std::max(synthdata::diameter(spec_p), synthdata::diameter(spec_q));

  auto draw = [&](std::uint64_t t) {
    const auto sp = synthdata::sample(spec_p, n, rng::derive(seed, rng::Tag::kCheck, 2 * t));
    const auto sq = synthdata::sample(spec_q, n, rng::derive(seed, rng::Tag::kCheck, 2 * t + 1));
    return ipm::exact_ipm_finite_family(family, sp.points, sq.points);
  };

  ExpMomentResult r;
  double mean = 0.0;
  for (std::size_t t = 0; t < trials; ++t) mean += draw(t);
  mean /= static_cast<double>(trials);
  r.mean_ipm = mean;

  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const double v = std::exp(lambda * (mean - draw(trials + t)));
    sum += v;
    sum_sq += v * v;
  }
  const double m = static_cast<double>(trials);
  r.estimate = sum / m;
  const double var = std::max(0.0, (sum_sq - m * r.estimate * r.estimate) / (m - 1.0));
  r.std_error = std::sqrt(var / m);
  r.bound = exp_moment_bound(lambda, diam, n);
  r.pass = r.estimate <= r.bound * (1.0 + 3.0 * r.std_error / r.estimate);
  return r;
}

// ---------------------------------------------------------------------------
// CSV rows: sigma0,lambda,delta,n,risk,kl,gap,total

inline std::string certificate_csv_header() { return "sigma0,lambda,delta,n,risk,kl,gap,total"; }

inline void write_certificate_row(std::ostream& os, double sigma0, const CertificateInputs& in,
                                  const Certificate& c) {
  os << std::setprecision(10) << sigma0 << ',' << in.lambda << ',' << in.delta << ',' << in.n << ','
     << c.risk_term << ',' << in.complexity << ',' << c.gap() << ',' << c.total;
}

}  // namespace pacgen::bounds
