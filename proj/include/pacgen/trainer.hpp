#pragma once

// Experiment protocol: a deterministic WGAN on the first n0 samples learns the
// prior mean, a Gaussian posterior over generator parameters is trained on
// all n samples with one reparameterized draw per step, and the certificate
// is evaluated on the held-out n - n0 samples by averaging over generators
// drawn from the posterior.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "pacgen/autodiff.hpp"
#include "pacgen/bounds.hpp"
#include "pacgen/error.hpp"
#include "pacgen/ipm.hpp"
#include "pacgen/lipnet.hpp"
#include "pacgen/optim.hpp"
#include "pacgen/probdist.hpp"
#include "pacgen/rng.hpp"
#include "pacgen/synthdata.hpp"

namespace pacgen::trainer {

using Matrix = Eigen::MatrixXd;
using lipnet::NetArchitecture;
using lipnet::ParamVector;
using probdist::DiagonalGaussian;
using synthdata::SampleSet;

enum class SlackChoice { kDiameter, kManifold, kTotalVariation };

/// Which sample size enters the concentration term.
enum class CertSampleSize { kEval, kFull };

/// Which real sample the certification critic is fitted on.
enum class CertCriticData { kEval, kPrior };

struct TrainConfig {
  std::string dataset = "ring8";  // ring8, grid25 or a spec file
  std::size_t n = 10240;
  std::size_t n0 = 5120;
  std::size_t test_n = 0;  // 0 means n - n0
  double sigma0 = 1e-5;
  probdist::Sigma0Meaning sigma0_meaning = probdist::Sigma0Meaning::kStdDev;
  bounds::LambdaRule lambda_rule = bounds::NOver1024{};
  double delta = 0.05;
  SlackChoice slack = SlackChoice::kDiameter;
  double lipschitz_k = 1.0;  // manifold slack only
  CertSampleSize cert_n = CertSampleSize::kEval;

  NetArchitecture gen_arch{{2, 64, 64, 2}};
  NetArchitecture critic_arch{{2, 64, 64, 1}};
  ipm::LatentSpec latent{};
  int bjorck_iterations = ipm::kDefaultBjorckIterations;

  int steps_prior = 3000;
  int steps_posterior = 3000;
  int critic_steps_per_gen = 5;
  Eigen::Index batch = 256;
  double lr_gen = 1e-3;
  double lr_critic = 1e-3;
  double lr_posterior_mean = 1e-3;
  double lr_posterior_std = 1e-4;

  int m_generators = 100;
  int reps = 8;
  int cert_critic_steps = 2000;
  Eigen::Index cert_batch = 256;
  double lr_cert_critic = 1e-3;
  CertCriticData cert_critic_data = CertCriticData::kEval;

  std::uint64_t seed = 0;

  std::size_t n_eval() const { return n - n0; }
  std::size_t effective_test_n() const { return test_n == 0 ? n_eval() : test_n; }

  void validate() const {
    auto check = [](bool ok, const std::string& msg) {
      if (!ok) throw ConfigError(msg);
    };
    check(n0 > 0 && n0 < n, "config: need 0 < n0 < n");
    check(sigma0 > 0.0 && std::isfinite(sigma0), "config: sigma0 must be positive");
    check(delta > 0.0 && delta < 1.0, "config: delta must lie in (0, 1)");
    check(m_generators >= 1, "config: m_generators must be at least 1");
    check(reps >= 1, "config: reps must be at least 1");
    check(steps_prior >= 0 && steps_posterior >= 0 && cert_critic_steps >= 0, "config: step counts must be >= 0");
    check(critic_steps_per_gen >= 0, "config: critic_steps_per_gen must be >= 0");
    check(batch >= 1 && cert_batch >= 1, "config: batch sizes must be positive");
    check(bjorck_iterations >= 1, "config: bjorck_iterations must be at least 1");
    for (double lr : {lr_gen, lr_critic, lr_posterior_mean, lr_posterior_std, lr_cert_critic}) {
      check(lr > 0.0 && std::isfinite(lr), "config: learning rates must be positive");
    }
    check(lipschitz_k > 0.0, "config: lipschitz_k must be positive");
    check(latent.dim >= 1, "config: latent_dim must be at least 1");
    try {
      gen_arch.validate();
      critic_arch.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    check(gen_arch.input_dim() == latent.dim, "config: generator input width must equal latent_dim");
    check(gen_arch.output_dim() == 2, "config: generator must output 2-d points");
    check(critic_arch.input_dim() == 2 && critic_arch.output_dim() == 1, "config: critic must map 2 -> 1");
    check(critic_arch.certified(), "config: critic activation must be groupsort for certified critics");
  }
};

inline synthdata::MixtureSpec dataset_spec(const TrainConfig& cfg) { return synthdata::spec_by_name(cfg.dataset); }

inline double lambda_for(const TrainConfig& cfg) { return bounds::lambda_rule(cfg.lambda_rule, cfg.n); }

// ---------------------------------------------------------------------------
// Data

struct DataSplits {
  SampleSet all;
  SampleSet prior;  // first n0
  SampleSet eval;   // remaining n - n0
  SampleSet test;   // fresh sample, never used for training
};

inline DataSplits make_splits(const TrainConfig& cfg) {
  cfg.validate();
  const auto spec = dataset_spec(cfg);
  DataSplits d;
  d.all = synthdata::sample(spec, cfg.n, rng::derive(cfg.seed, rng::Tag::kData));
  std::tie(d.prior, d.eval) = synthdata::split(d.all, cfg.n0);
  d.test = synthdata::sample(spec, cfg.effective_test_n(), rng::derive(cfg.seed, rng::Tag::kTestData));
  return d;
}

namespace impl {

template <class Engine>
Matrix minibatch(const Matrix& points, Eigen::Index size, Engine& engine, std::vector<std::size_t>* rows = nullptr) {
  const Eigen::Index m = std::min(size, points.rows());
  std::uniform_int_distribution<Eigen::Index> pick(0, points.rows() - 1);
  Matrix out(m, points.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index r = pick(engine);
    out.row(i) = points.row(r);
    if (rows != nullptr) rows->push_back(static_cast<std::size_t>(r));
  }
  return out;
}

/// d/d(generator params) of -mean f(G(z)) for a fixed projected critic f,
/// i.e. of the critic gap (the real term does not depend on G).
inline std::pair<double, ParamVector> generator_gradient(const NetArchitecture& gen_arch, const ParamVector& gen,
                                                         const ipm::ProjectedCritic& critic, const Matrix& z) {
  return lipnet::value_and_gradient(gen_arch, gen, [&](ad::Tape& t, ad::Var p) {
    ad::Var fake = lipnet::forward(gen_arch, p, t.constant(z));
    ad::Var out = lipnet::forward(critic.arch(), t.constant(critic.projected_params()), fake);
    if (critic.mode() == ipm::CriticMode::kTotalVariation) out = ad::clip(out, -1.0, 1.0);
    return -1.0 * ad::mean(out);
  });
}

}  // namespace impl

// ---------------------------------------------------------------------------
// Prior mean: deterministic WGAN

struct TraceRow {
  int step = 0;
  double gap = 0.0;        // achieved critic gap on the step's minibatch
  double kl = 0.0;         // posterior training only
  double objective = 0.0;  // gap + kl / lambda
};

struct PriorResult {
  ParamVector generator;
  ipm::CriticState critic;
  std::vector<TraceRow> trace;
  std::vector<std::size_t> rows_seen;  // origin indices of every real point used (sorted, unique)
};

inline ParamVector init_generator(const TrainConfig& cfg) {
  auto engine = rng::stream(cfg.seed, rng::Tag::kGeneratorInit);
  return lipnet::init_uniform(cfg.gen_arch, engine);
}

/// Alternates critic_steps_per_gen ascent steps with one generator descent
/// step on the achieved gap, for steps_prior generator steps.
inline PriorResult train_prior(const SampleSet& data_prior, const TrainConfig& cfg) {
  cfg.validate();
  detail::require(data_prior.size() == cfg.n0, "train_prior expects exactly n0 samples");
  auto engine = rng::stream(cfg.seed, rng::Tag::kPriorTraining);
  PriorResult r;
  r.generator = init_generator(cfg);
  r.critic = ipm::make_critic(cfg.critic_arch, rng::derive(cfg.seed, rng::Tag::kCriticInit, 0), cfg.bjorck_iterations);
  optim::RMSProp gen_opt;
  std::vector<std::size_t> rows;
  const Matrix& real = data_prior.points;

  for (int step = 0; step < cfg.steps_prior; ++step) {
    for (int k = 0; k < cfg.critic_steps_per_gen; ++k) {
      const Matrix rb = impl::minibatch(real, cfg.batch, engine, &rows);
      const Matrix fb = lipnet::forward(cfg.gen_arch, r.generator, cfg.latent.sample(rb.rows(), engine));
      ipm::critic_ascent_step(r.critic, rb, fb, cfg.lr_critic);
    }
    const Matrix rb = impl::minibatch(real, cfg.batch, engine, &rows);
    const Matrix z = cfg.latent.sample(rb.rows(), engine);
    const auto f = r.critic.snapshot();
    auto [neg_fake_mean, grad] = impl::generator_gradient(cfg.gen_arch, r.generator, f, z);
    const double gap = f(rb).mean() + neg_fake_mean;
    gen_opt.step(r.generator, grad, cfg.lr_gen);
    if (!r.generator.allFinite()) throw DivergenceError("prior generator parameters became non-finite");
    r.trace.push_back({step, gap, 0.0, gap});
  }

  for (std::size_t& i : rows) i = data_prior.origin[i];
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
  r.rows_seen = std::move(rows);
  return r;
}

// ---------------------------------------------------------------------------
// Posterior

struct PosteriorResult {
  DiagonalGaussian posterior;
  std::vector<TraceRow> trace;
};

/// Optimizes gap(g) + KL(rho || pi) / lambda over rho = N(mu, diag(sigma^2)),
/// one reparameterized draw g ~ rho per step. The optimizer works in
/// coordinates relative to the prior, mu = mu_p + sigma_p * u and
/// log sigma = log sigma_p + t, where KL = sum(-t + (exp(2t) + u^2) / 2 - 1/2)
/// has unit curvature at the prior regardless of sigma_p. Starts at the prior
/// (u = 0, t = 0). `critic` is warm-started and updated in place.
inline PosteriorResult train_posterior(const SampleSet& data_all, const DiagonalGaussian& prior,
                                       ipm::CriticState critic, const TrainConfig& cfg) {
  cfg.validate();
  prior.validate();
  detail::require(prior.size() == cfg.gen_arch.num_params(), "prior does not match the generator architecture");
  const double lambda = lambda_for(cfg);
  auto engine = rng::stream(cfg.seed, rng::Tag::kPosteriorTraining);
  const Eigen::Index dim = prior.size();
  const Eigen::VectorXd sigma_p = prior.std();
  Eigen::VectorXd u = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd t = Eigen::VectorXd::Zero(dim);
  optim::RMSProp mean_opt;
  optim::RMSProp std_opt;
  std::normal_distribution<double> normal(0.0, 1.0);
  PosteriorResult r;
  const Matrix& real = data_all.points;

  auto kl_of = [](const Eigen::VectorXd& u, const Eigen::VectorXd& t) {
    return (-t.array() + 0.5 * ((2.0 * t.array()).exp() + u.array().square()) - 0.5).sum();
  };

  for (int step = 0; step < cfg.steps_posterior; ++step) {
    Eigen::VectorXd eps(dim);
    for (Eigen::Index i = 0; i < dim; ++i) eps(i) = normal(engine);
    const Eigen::VectorXd sigma = sigma_p.cwiseProduct(t.array().exp().matrix());
    const ParamVector g = prior.mean + sigma_p.cwiseProduct(u) + sigma.cwiseProduct(eps);

    for (int k = 0; k < cfg.critic_steps_per_gen; ++k) {
      const Matrix rb = impl::minibatch(real, cfg.batch, engine);
      const Matrix fb = lipnet::forward(cfg.gen_arch, g, cfg.latent.sample(rb.rows(), engine));
      ipm::critic_ascent_step(critic, rb, fb, cfg.lr_critic);
    }
    const Matrix rb = impl::minibatch(real, cfg.batch, engine);
    const Matrix z = cfg.latent.sample(rb.rows(), engine);
    const auto f = critic.snapshot();
    auto [neg_fake_mean, grad_g] = impl::generator_gradient(cfg.gen_arch, g, f, z);
    const double gap = f(rb).mean() + neg_fake_mean;
    const double kl = kl_of(u, t);

    const Eigen::VectorXd grad_u = sigma_p.cwiseProduct(grad_g) + u / lambda;
    const Eigen::VectorXd grad_t =
        grad_g.cwiseProduct(sigma).cwiseProduct(eps) + ((2.0 * t.array()).exp() - 1.0).matrix() / lambda;
    mean_opt.step(u, grad_u, cfg.lr_posterior_mean);
    std_opt.step(t, grad_t, cfg.lr_posterior_std);
    r.trace.push_back({step, gap, kl, gap + kl / lambda});
  }

  r.posterior.mean = prior.mean + sigma_p.cwiseProduct(u);
  r.posterior.log_std = prior.log_std + t;
  if (!r.posterior.mean.allFinite() || !r.posterior.log_std.allFinite()) {
    throw DivergenceError("posterior parameters became non-finite");
  }
  return r;
}

// ---------------------------------------------------------------------------
// Certification

struct ExperimentResult {
  double sigma0 = 0.0;
  double lambda = 0.0;
  double train_risk = 0.0;
  double test_risk = 0.0;
  double kl = 0.0;
  bounds::CertificateInputs inputs;
  bounds::Certificate certificate;
  DiagonalGaussian posterior;
  DiagonalGaussian prior;
  std::vector<double> train_risks;  // per generator
  std::vector<double> test_risks;   // per generator
  std::vector<TraceRow> prior_trace;
  std::vector<TraceRow> posterior_trace;
  std::string error;  // non-empty when the run failed inside a sweep

  bool ok() const { return error.empty(); }
};

inline bounds::SlackKind slack_for(const TrainConfig& cfg) {
  switch (cfg.slack) {
    case SlackChoice::kManifold:
      return bounds::Manifold{cfg.lipschitz_k, static_cast<int>(cfg.latent.dim)};
    case SlackChoice::kTotalVariation:
      return bounds::TotalVariation{};
    case SlackChoice::kDiameter:
      break;
  }
  return bounds::Diameter{synthdata::diameter(dataset_spec(cfg))};
}

/// Fits a fresh certification critic against fakes from generators drawn
/// from the posterior, then averages the empirical risk |mean f(real) -
/// mean f(fake)| over m_generators posterior draws and `reps` fake samples of
/// size n - n0 each. The train risk uses `data_eval`, the test risk the fresh
/// `test` sample with the same critic and the same fake samples.
inline ExperimentResult certify(const DiagonalGaussian& posterior, const DiagonalGaussian& prior,
                                const SampleSet& data_eval, const SampleSet& test, const TrainConfig& cfg,
                                const SampleSet* critic_data = nullptr) {
  cfg.validate();
  posterior.validate();
  detail::require(data_eval.size() == cfg.n_eval(), "certify expects exactly n - n0 evaluation samples");
  detail::require(test.size() > 0, "certify needs a non-empty test sample");
  const Matrix& fit_real = critic_data != nullptr ? critic_data->points : data_eval.points;

  auto engine = rng::stream(cfg.seed, rng::Tag::kCertification);
  std::normal_distribution<double> normal(0.0, 1.0);
  ipm::CriticState critic =
      ipm::make_critic(cfg.critic_arch, rng::derive(cfg.seed, rng::Tag::kCriticInit, 1), cfg.bjorck_iterations);
  const Eigen::VectorXd post_std = posterior.std();
  for (int s = 0; s < cfg.cert_critic_steps; ++s) {
    const Matrix rb = impl::minibatch(fit_real, cfg.cert_batch, engine);
    ParamVector g = posterior.mean;
    for (Eigen::Index i = 0; i < g.size(); ++i) g(i) += post_std(i) * normal(engine);
    const Matrix fb = lipnet::forward(cfg.gen_arch, g, cfg.latent.sample(rb.rows(), engine));
    ipm::critic_ascent_step(critic, rb, fb, cfg.lr_cert_critic);
  }
  const auto f = critic.snapshot();
  const double real_mean = f(data_eval.points).mean();
  const double test_mean = f(test.points).mean();

  ExperimentResult res;
  res.sigma0 = cfg.sigma0;
  res.lambda = lambda_for(cfg);
  res.posterior = posterior;
  res.prior = prior;
  const auto m = static_cast<std::size_t>(cfg.m_generators);
  res.train_risks.resize(m);
  res.test_risks.resize(m);
  // Latent batches are shared by all generators (common random numbers).
  std::vector<Matrix> latents;
  const auto latent_seed = rng::derive(cfg.seed, rng::Tag::kCertification, 0);
  for (int rep = 0; rep < cfg.reps; ++rep) {
    auto e = rng::stream(latent_seed, rng::Tag::kUser, static_cast<std::uint64_t>(rep));
    latents.push_back(cfg.latent.sample(data_eval.points.rows(), e));
  }
  for (std::size_t j = 0; j < m; ++j) {
    const ParamVector g = probdist::sample_params(posterior, rng::derive(cfg.seed, rng::Tag::kCertification, j + 1));
    double tr = 0.0;
    double te = 0.0;
    for (const Matrix& z : latents) {
      const Matrix fake = lipnet::forward(cfg.gen_arch, g, z);
      const double fake_mean = f(fake).mean();
      tr += std::abs(real_mean - fake_mean);
      te += std::abs(test_mean - fake_mean);
    }
    res.train_risks[j] = tr / cfg.reps;
    res.test_risks[j] = te / cfg.reps;
    if (!std::isfinite(res.train_risks[j]) || !std::isfinite(res.test_risks[j])) {
      throw DivergenceError("non-finite empirical risk during certification");
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    res.train_risk += res.train_risks[j];
    res.test_risk += res.test_risks[j];
  }
  res.train_risk /= static_cast<double>(m);
  res.test_risk /= static_cast<double>(m);
  res.kl = probdist::kl(posterior, prior);

  res.inputs.empirical_risk = res.train_risk;
  res.inputs.complexity = res.kl;
  res.inputs.lambda = res.lambda;
  res.inputs.delta = cfg.delta;
  res.inputs.n = cfg.cert_n == CertSampleSize::kEval ? cfg.n_eval() : cfg.n;
  res.inputs.slack = slack_for(cfg);
  res.certificate = bounds::certificate(res.inputs);
  return res;
}

// ---------------------------------------------------------------------------
// Full runs and sweeps

inline DiagonalGaussian prior_from(const ParamVector& mean, const TrainConfig& cfg) {
  return probdist::isotropic_prior(mean, cfg.sigma0, cfg.sigma0_meaning);
}

/// Posterior training and certification for one sigma0 on top of a trained
/// prior mean.
inline ExperimentResult run_from_prior(const PriorResult& prior_run, const DataSplits& data, const TrainConfig& cfg) {
  const DiagonalGaussian prior = prior_from(prior_run.generator, cfg);
  PosteriorResult post = train_posterior(data.all, prior, prior_run.critic, cfg);
  const SampleSet* critic_data = cfg.cert_critic_data == CertCriticData::kPrior ? &data.prior : nullptr;
  ExperimentResult res = certify(post.posterior, prior, data.eval, data.test, cfg, critic_data);
  res.prior_trace = prior_run.trace;
  res.posterior_trace = std::move(post.trace);
  return res;
}

inline ExperimentResult run_experiment(const TrainConfig& cfg) {
  const DataSplits data = make_splits(cfg);
  const PriorResult prior_run = train_prior(data.prior, cfg);
  return run_from_prior(prior_run, data, cfg);
}

/// One posterior + certificate per sigma0. The data splits and the prior mean
/// (which does not depend on sigma0) are shared. A failing point is recorded
/// in its `error` field and the sweep continues. Results keep the order of
/// `values`; up to `jobs` points run concurrently.
inline std::vector<ExperimentResult> sweep_sigma0(const std::vector<double>& values, const TrainConfig& cfg,
                                                  int jobs = 1) {
  detail::require(!values.empty(), "sweep needs at least one sigma0 value");
  for (double v : values) detail::require(v > 0.0 && std::isfinite(v), "sigma0 values must be positive");
  const DataSplits data = make_splits(cfg);
  const PriorResult prior_run = train_prior(data.prior, cfg);

  std::vector<ExperimentResult> out(values.size());
  std::mutex mu;
  std::size_t next = 0;
  auto worker = [&] {
    while (true) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= values.size()) return;
        i = next++;
      }
      TrainConfig c = cfg;
      c.sigma0 = values[i];
      try {
        out[i] = run_from_prior(prior_run, data, c);
      } catch (const Error& e) {
        out[i] = ExperimentResult{};
        out[i].sigma0 = values[i];
        out[i].error = e.what();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(values.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV output

inline std::string sweep_csv_header() { return bounds::certificate_csv_header() + ",train_risk,test_risk,status"; }

inline void write_sweep_row(std::ostream& os, const ExperimentResult& r) {
  if (r.ok()) {
    bounds::write_certificate_row(os, r.sigma0, r.inputs, r.certificate);
    os << ',' << r.train_risk << ',' << r.test_risk << ",ok\n";
  } else {
    std::string msg = r.error;
    std::replace(msg.begin(), msg.end(), ',', ';');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    os << std::setprecision(10) << r.sigma0 << ",,,,,,,,,,error: " << msg << '\n';
  }
}

inline void write_sweep_csv(std::ostream& os, const std::vector<ExperimentResult>& rows) {
  os << sweep_csv_header() << '\n';
  for (const auto& r : rows) write_sweep_row(os, r);
}

inline void write_trace_csv(std::ostream& os, const std::vector<TraceRow>& trace) {
  os << "step,gap,kl,objective\n" << std::setprecision(10);
  for (const auto& t : trace) os << t.step << ',' << t.gap << ',' << t.kl << ',' << t.objective << '\n';
}

inline void write_risks_csv(std::ostream& os, const ExperimentResult& r) {
  os << "generator,train_risk,test_risk\n" << std::setprecision(10);
  for (std::size_t j = 0; j < r.train_risks.size(); ++j) {
    os << j << ',' << r.train_risks[j] << ',' << r.test_risks[j] << '\n';
  }
}

/// `count` points from one generator drawn from the posterior.
inline Matrix generator_samples(const DiagonalGaussian& posterior, const TrainConfig& cfg, Eigen::Index count,
                                std::uint64_t seed) {
  const ParamVector g = probdist::sample_params(posterior, seed);
  auto engine = rng::stream(seed, rng::Tag::kUser, 1);
  return lipnet::forward(cfg.gen_arch, g, cfg.latent.sample(count, engine));
}

}  // namespace pacgen::trainer
