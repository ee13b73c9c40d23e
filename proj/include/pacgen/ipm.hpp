#pragma once

// Empirical integral probability metrics between a real and a fake sample:
// the neural critic gap and its maximization, the expected empirical risk
// over fake samples, exact IPMs for finite function families, and the
// single-point bounded-differences check.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "pacgen/autodiff.hpp"
#include "pacgen/error.hpp"
#include "pacgen/lipnet.hpp"
#include "pacgen/optim.hpp"
#include "pacgen/rng.hpp"

namespace pacgen::ipm {

using Matrix = Eigen::MatrixXd;
using lipnet::NetArchitecture;
using lipnet::ParamVector;

/// kTotalVariation clips critic outputs to [-1, 1].
enum class CriticMode { kLipschitz, kTotalVariation };

inline constexpr int kDefaultBjorckIterations = 25;

/// A critic with its weights already orthonormalized; cheap to evaluate.
class ProjectedCritic {
 public:
  ProjectedCritic(NetArchitecture arch, ParamVector projected, CriticMode mode)
      : arch_(std::move(arch)), projected_(std::move(projected)), mode_(mode) {}

  Eigen::VectorXd operator()(const Matrix& batch) const {
    Eigen::VectorXd out = lipnet::forward(arch_, projected_, batch).col(0);
    if (mode_ == CriticMode::kTotalVariation) out = out.cwiseMax(-1.0).cwiseMin(1.0);
    return out;
  }

  const NetArchitecture& arch() const { return arch_; }
  const ParamVector& projected_params() const { return projected_; }
  CriticMode mode() const { return mode_; }

 private:
  NetArchitecture arch_;
  ParamVector projected_;
  CriticMode mode_;
};

struct CriticState {
  NetArchitecture arch;
  ParamVector raw_params;
  int bjorck_iterations = kDefaultBjorckIterations;
  CriticMode mode = CriticMode::kLipschitz;
  optim::RMSProp optimizer;

  void validate() const {
    lipnet::check_params(arch, raw_params);
    detail::require(arch.output_dim() == 1, "critic must have a scalar output");
    detail::require(bjorck_iterations >= 1, "critic needs at least one Björck iteration");
  }

  ProjectedCritic snapshot() const {
    validate();
    return {arch, lipnet::project_weights(arch, raw_params, bjorck_iterations), mode};
  }

  /// Replaces f by -f (flips the output layer; Björck commutes with negation).
  void negate() {
    const auto last = lipnet::layout(arch).back();
    raw_params.segment(last.weight_offset, last.rows * last.cols + last.rows) *= -1.0;
  }
};

/// Orthogonally initialized critic.
inline CriticState make_critic(const NetArchitecture& arch, std::uint64_t seed,
                               int bjorck_iterations = kDefaultBjorckIterations,
                               CriticMode mode = CriticMode::kLipschitz) {
  auto engine = rng::stream(seed, rng::Tag::kCriticInit);
  CriticState c{arch, lipnet::init_orthogonal(arch, engine), bjorck_iterations, mode, {}};
  c.validate();
  return c;
}

namespace impl {

inline void check_batches(const Matrix& real, const Matrix& fake) {
  detail::require(real.rows() > 0 && fake.rows() > 0, "critic gap needs non-empty batches");
  detail::require(real.cols() == 2 && fake.cols() == 2, "batches must be two-dimensional");
}

/// Stacks real over fake and returns the weights w with gap = w . f(stacked).
inline std::pair<Matrix, Matrix> stacked(const Matrix& real, const Matrix& fake) {
  Matrix both(real.rows() + fake.rows(), real.cols());
  both << real, fake;
  Matrix w(both.rows(), 1);
  w.topRows(real.rows()).setConstant(1.0 / static_cast<double>(real.rows()));
  w.bottomRows(fake.rows()).setConstant(-1.0 / static_cast<double>(fake.rows()));
  return {std::move(both), std::move(w)};
}

}  // namespace impl

/// mean f(real) - mean f(fake) for the orthonormalized critic f.
inline double critic_gap(const ProjectedCritic& f, const Matrix& real, const Matrix& fake) {
  impl::check_batches(real, fake);
  return f(real).mean() - f(fake).mean();
}

inline double critic_gap(const CriticState& critic, const Matrix& real, const Matrix& fake) {
  return critic_gap(critic.snapshot(), real, fake);
}

/// Differentiable critic gap as a function of the critic's raw parameters.
inline ad::Var critic_gap(ad::Tape& tape, const CriticState& critic, ad::Var raw, const Matrix& real,
                          const Matrix& fake) {
  auto [both, weights] = impl::stacked(real, fake);
  ad::Var out = lipnet::critic_forward(critic.arch, raw, tape.constant(std::move(both)), critic.bjorck_iterations);
  if (critic.mode == CriticMode::kTotalVariation) out = ad::clip(out, -1.0, 1.0);
  return ad::dot(out, tape.constant(std::move(weights)));
}

/// One RMSProp ascent step on the critic gap; returns the gap before the step.
inline double critic_ascent_step(CriticState& critic, const Matrix& real, const Matrix& fake, double lr) {
  impl::check_batches(real, fake);
  auto [gap, grad] = lipnet::value_and_gradient(critic.arch, critic.raw_params, [&](ad::Tape& t, ad::Var raw) {
    return critic_gap(t, critic, raw, real, fake);
  });
  critic.optimizer.ascend(critic.raw_params, grad, lr);
  if (!critic.raw_params.allFinite()) throw DivergenceError("critic parameters became non-finite");
  return gap;
}

/// Makes the gap on (real, fake) non-negative by negating the critic if
/// needed, relying on the family being closed under negation.
inline double enforce_nonnegative_gap(CriticState& critic, const Matrix& real, const Matrix& fake) {
  double gap = critic_gap(critic, real, fake);
  if (gap < 0.0) {
    critic.negate();
    gap = -gap;
  }
  return gap;
}

/// In-place ascent used by the training loops.
inline double ascend_critic(CriticState& critic, const Matrix& real, const Matrix& fake, int steps, double lr) {
  detail::require(steps >= 0, "critic steps must be non-negative");
  for (int s = 0; s < steps; ++s) critic_ascent_step(critic, real, fake, lr);
  return enforce_nonnegative_gap(critic, real, fake);
}

/// Gradient ascent on the critic gap through the Björck projection. With
/// `batch` > 0 each step uses minibatches of that size drawn with `seed`;
/// otherwise the full sets. The returned gap is measured on the full sets and
/// is non-negative.
inline std::pair<CriticState, double> maximize_critic(CriticState critic, const Matrix& real, const Matrix& fake,
                                                      int steps, double lr, std::uint64_t seed,
                                                      Eigen::Index batch = 0) {
  impl::check_batches(real, fake);
  detail::require(steps >= 0, "critic steps must be non-negative");
  auto engine = rng::stream(seed, rng::Tag::kUser);
  const bool minibatch = batch > 0 && (batch < real.rows() || batch < fake.rows());
  Matrix rb;
  Matrix fb;
  for (int s = 0; s < steps; ++s) {
    if (minibatch) {
      std::uniform_int_distribution<Eigen::Index> pick_real(0, real.rows() - 1);
      std::uniform_int_distribution<Eigen::Index> pick_fake(0, fake.rows() - 1);
      rb.resize(std::min(batch, real.rows()), 2);
      fb.resize(std::min(batch, fake.rows()), 2);
      for (Eigen::Index i = 0; i < rb.rows(); ++i) rb.row(i) = real.row(pick_real(engine));
      for (Eigen::Index i = 0; i < fb.rows(); ++i) fb.row(i) = fake.row(pick_fake(engine));
      critic_ascent_step(critic, rb, fb, lr);
    } else {
      critic_ascent_step(critic, real, fake, lr);
    }
  }
  const double gap = enforce_nonnegative_gap(critic, real, fake);
  return {std::move(critic), gap};
}

// ---------------------------------------------------------------------------
// Latent distribution

enum class LatentKind { kUniform, kNormal };

/// Uniform on [0,1]^dim or standard normal.
struct LatentSpec {
  Eigen::Index dim = 2;
  LatentKind kind = LatentKind::kUniform;

  template <class Engine>
  Matrix sample(Eigen::Index m, Engine& engine) const {
    Matrix z(m, dim);
    if (kind == LatentKind::kUniform) {
      std::uniform_real_distribution<double> u(0.0, 1.0);
      for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < dim; ++j) z(i, j) = u(engine);
      }
    } else {
      std::normal_distribution<double> g(0.0, 1.0);
      for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < dim; ++j) z(i, j) = g(engine);
      }
    }
    return z;
  }
};

// ---------------------------------------------------------------------------
// Discrepancies d(real, fake)

/// Empirical IPM over {f, -f} for a fixed critic f, i.e. |critic gap|.
inline auto neural_discrepancy(const ProjectedCritic& f) {
  return [f](const Matrix& real, const Matrix& fake) { return std::abs(critic_gap(f, real, fake)); };
}

using PointFunction = std::function<double(const Eigen::Vector2d&)>;

/// Exact sup over a finite family of mean f(real) - mean f(fake).
inline double exact_ipm_finite_family(const std::vector<PointFunction>& family, const Matrix& real,
                                      const Matrix& fake) {
  detail::require(!family.empty(), "finite family must be non-empty");
  impl::check_batches(real, fake);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& f : family) {
    double sr = 0.0;
    double sf = 0.0;
    for (Eigen::Index i = 0; i < real.rows(); ++i) sr += f(real.row(i).transpose());
    for (Eigen::Index i = 0; i < fake.rows(); ++i) sf += f(fake.row(i).transpose());
    best = std::max(best, sr / static_cast<double>(real.rows()) - sf / static_cast<double>(fake.rows()));
  }
  return best;
}

inline auto finite_family_discrepancy(std::vector<PointFunction> family) {
  return [family = std::move(family)](const Matrix& real, const Matrix& fake) {
    return exact_ipm_finite_family(family, real, fake);
  };
}

/// Appends -f for every f.
inline std::vector<PointFunction> symmetrize(std::vector<PointFunction> family) {
  const std::size_t n = family.size();
  for (std::size_t i = 0; i < n; ++i) {
    PointFunction f = family[i];
    family.push_back([f](const Eigen::Vector2d& x) { return -f(x); });
  }
  return family;
}

/// x -> <u, x> for a unit vector u.
inline PointFunction linear_functional(Eigen::Vector2d direction) {
  detail::require(std::abs(direction.norm() - 1.0) <= 1e-12, "linear functional needs a unit direction");
  return [direction](const Eigen::Vector2d& x) { return direction.dot(x); };
}

/// x -> ||x - c||.
inline PointFunction distance_to(Eigen::Vector2d center) {
  return [center](const Eigen::Vector2d& x) { return (x - center).norm(); };
}

// ---------------------------------------------------------------------------
// Empirical risk

/// Monte-Carlo estimate of E_{S_g}[d(real, S_g)]: each repetition draws
/// real.rows() latent vectors, pushes them through `generator` and evaluates
/// `discrepancy`. Repetition r uses stream (seed, r).
template <class PushForward, class Discrepancy>
double empirical_risk(PushForward&& generator, const LatentSpec& latent, const Matrix& real,
                      Discrepancy&& discrepancy, int reps, std::uint64_t seed) {
  detail::require(reps >= 1, "empirical risk needs at least one repetition");
  detail::require(real.rows() > 0, "empirical risk needs a non-empty real sample");
  double total = 0.0;
  for (int r = 0; r < reps; ++r) {
    auto engine = rng::stream(seed, rng::Tag::kUser, static_cast<std::uint64_t>(r));
    const Matrix fake = generator(latent.sample(real.rows(), engine));
    const double d = discrepancy(real, fake);
    if (!std::isfinite(d)) throw DivergenceError("non-finite discrepancy in empirical risk");
    total += d;
  }
  return total / reps;
}

template <class Discrepancy>
double empirical_risk(const NetArchitecture& gen_arch, const ParamVector& generator, const LatentSpec& latent,
                      const Matrix& real, Discrepancy&& discrepancy, int reps, std::uint64_t seed) {
  lipnet::check_params(gen_arch, generator);
  detail::require(gen_arch.input_dim() == latent.dim, "generator input does not match latent dimension");
  return empirical_risk([&](const Matrix& z) { return lipnet::forward(gen_arch, generator, z); }, latent, real,
                        std::forward<Discrepancy>(discrepancy), reps, seed);
}

// ---------------------------------------------------------------------------
// Bounded differences

enum class DifferenceMode { kLipschitz, kTotalVariation };

/// |d(original) - d(perturbed)| where d = |mean f(real) - mean f(fake)| and
/// the perturbation replaces point `index` of the concatenation real ++ fake.
/// In kTotalVariation mode f is clipped to [-1, 1].
template <class Critic>
double single_point_change(Critic&& f, const Matrix& real, const Matrix& fake, Eigen::Index index,
                           const Eigen::Vector2d& replacement, DifferenceMode mode) {
  impl::check_batches(real, fake);
  detail::require(real.rows() == fake.rows(), "bounded differences assume equal sample sizes");
  detail::require(index >= 0 && index < 2 * real.rows(), "perturbation index out of range");
  auto eval = [&](const Matrix& b) -> Eigen::VectorXd {
    Eigen::VectorXd v = f(b);
    if (mode == DifferenceMode::kTotalVariation) v = v.cwiseMax(-1.0).cwiseMin(1.0);
    return v;
  };
  auto gap = [&](const Matrix& r, const Matrix& q) { return std::abs(eval(r).mean() - eval(q).mean()); };
  const double before = gap(real, fake);
  Matrix real2 = real;
  Matrix fake2 = fake;
  if (index < real.rows()) {
    real2.row(index) = replacement.transpose();
  } else {
    fake2.row(index - real.rows()) = replacement.transpose();
  }
  return std::abs(before - gap(real2, fake2));
}

/// True iff the single-point change is within c = delta / n (Lipschitz mode)
/// or 2 / n (clipped mode), up to 1e-9.
template <class Critic>
bool bounded_diff_check(Critic&& f, const Matrix& real, const Matrix& fake, Eigen::Index index,
                        const Eigen::Vector2d& replacement, double delta,
                        DifferenceMode mode = DifferenceMode::kLipschitz) {
  const double n = static_cast<double>(real.rows());
  const double bound = mode == DifferenceMode::kLipschitz ? delta / n : 2.0 / n;
  return single_point_change(std::forward<Critic>(f), real, fake, index, replacement, mode) <= bound + 1e-9;
}

}  // namespace pacgen::ipm
