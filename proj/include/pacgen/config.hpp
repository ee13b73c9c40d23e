#pragma once

// key=value experiment configuration. Blank lines and lines starting with '#'
// are ignored; every key is optional and unknown keys are errors.
//
//   dataset              ring8 | grid25 | path to a mixture spec file
//   n, n0, test_n        sample sizes (test_n = 0 means n - n0)
//   sigma0               prior scale
//   sigma0_meaning       std | variance
//   lambda_rule          sqrt_n | n | n_over_1024 | optimal | a positive number
//   optimal_complexity   complexity estimate used by lambda_rule=optimal
//   delta                confidence parameter in (0, 1)
//   slack                diameter | manifold | tv
//   lipschitz_k          K for slack=manifold
//   cert_n               eval | full
//   gen_widths           e.g. 2,64,64,2
//   critic_widths        e.g. 2,64,64,1
//   gen_activation       groupsort | relu
//   group_size           GroupSort group size
//   latent_dim           latent dimension
//   latent_kind          uniform | normal
//   bjorck_iterations
//   steps_prior, steps_posterior, critic_steps_per_gen, batch
//   lr_gen, lr_critic, lr_posterior_mean, lr_posterior_std
//   m_generators, reps
//   cert_critic_steps, cert_batch, lr_cert_critic
//   cert_critic_data     eval | prior
//   seed

#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>

#include "pacgen/error.hpp"
#include "pacgen/trainer.hpp"

namespace pacgen::config {

namespace parsing {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
  if (used != v.size()) throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  return out;
}

inline std::uint64_t to_unsigned(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' is out of range: '" + v + "'");
  }
}

inline int to_int(const std::string& key, const std::string& v) {
  const auto u = to_unsigned(key, v);
  if (u > static_cast<std::uint64_t>(std::numeric_limits<int>::max())) {
    throw ConfigError("config: '" + key + "' is out of range: '" + v + "'");
  }
  return static_cast<int>(u);
}

template <class Enum>
Enum to_enum(const std::string& key, const std::string& v, const std::map<std::string, Enum>& names) {
  const auto it = names.find(v);
  if (it == names.end()) {
    std::string allowed;
    for (const auto& [name, _] : names) allowed += (allowed.empty() ? "" : "|") + name;
    throw ConfigError("config: '" + key + "' must be one of " + allowed + ", got '" + v + "'");
  }
  return it->second;
}

inline std::vector<Eigen::Index> to_widths(const std::string& key, const std::string& v) {
  try {
    return lipnet::parse_widths(v);
  } catch (const Error& e) {
    throw ConfigError("config: '" + key + "': " + e.what());
  }
}

}  // namespace parsing

/// Parses configuration text on top of the defaults and validates the result.
inline trainer::TrainConfig parse_config_text(const std::string& text) {
  using namespace parsing;
  trainer::TrainConfig cfg;
  bool n0_given = false;
  double optimal_complexity = 0.0;
  std::string lambda_text = "n_over_1024";
  std::map<std::string, bool> seen;

  std::istringstream is(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(is, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string v = trim(line.substr(eq + 1));
    if (seen[key]) throw ConfigError("config: duplicate key '" + key + "'");
    seen[key] = true;

    if (key == "dataset") {
      cfg.dataset = v;
    } else if (key == "n") {
      cfg.n = to_unsigned(key, v);
    } else if (key == "n0") {
      cfg.n0 = to_unsigned(key, v);
      n0_given = true;
    } else if (key == "test_n") {
      cfg.test_n = to_unsigned(key, v);
    } else if (key == "sigma0") {
      cfg.sigma0 = to_double(key, v);
    } else if (key == "sigma0_meaning") {
      cfg.sigma0_meaning = to_enum<probdist::Sigma0Meaning>(
          key, v, {{"std", probdist::Sigma0Meaning::kStdDev}, {"variance", probdist::Sigma0Meaning::kVariance}});
    } else if (key == "lambda_rule") {
      lambda_text = v;
    } else if (key == "optimal_complexity") {
      optimal_complexity = to_double(key, v);
    } else if (key == "delta") {
      cfg.delta = to_double(key, v);
    } else if (key == "slack") {
      cfg.slack = to_enum<trainer::SlackChoice>(key, v,
                                                {{"diameter", trainer::SlackChoice::kDiameter},
                                                 {"manifold", trainer::SlackChoice::kManifold},
                                                 {"tv", trainer::SlackChoice::kTotalVariation}});
    } else if (key == "lipschitz_k") {
      cfg.lipschitz_k = to_double(key, v);
    } else if (key == "cert_n") {
      cfg.cert_n = to_enum<trainer::CertSampleSize>(
          key, v, {{"eval", trainer::CertSampleSize::kEval}, {"full", trainer::CertSampleSize::kFull}});
    } else if (key == "gen_widths") {
      cfg.gen_arch.widths = to_widths(key, v);
    } else if (key == "critic_widths") {
      cfg.critic_arch.widths = to_widths(key, v);
    } else if (key == "gen_activation") {
      cfg.gen_arch.activation = to_enum<lipnet::Activation>(
          key, v, {{"groupsort", lipnet::Activation::kGroupSort}, {"relu", lipnet::Activation::kReLU}});
    } else if (key == "group_size") {
      cfg.gen_arch.group_size = cfg.critic_arch.group_size = to_int(key, v);
    } else if (key == "latent_dim") {
      cfg.latent.dim = to_int(key, v);
    } else if (key == "latent_kind") {
      cfg.latent.kind =
          to_enum<ipm::LatentKind>(key, v, {{"uniform", ipm::LatentKind::kUniform}, {"normal", ipm::LatentKind::kNormal}});
    } else if (key == "bjorck_iterations") {
      cfg.bjorck_iterations = to_int(key, v);
    } else if (key == "steps_prior") {
      cfg.steps_prior = to_int(key, v);
    } else if (key == "steps_posterior") {
      cfg.steps_posterior = to_int(key, v);
    } else if (key == "critic_steps_per_gen") {
      cfg.critic_steps_per_gen = to_int(key, v);
    } else if (key == "batch") {
      cfg.batch = to_int(key, v);
    } else if (key == "lr_gen") {
      cfg.lr_gen = to_double(key, v);
    } else if (key == "lr_critic") {
      cfg.lr_critic = to_double(key, v);
    } else if (key == "lr_posterior_mean") {
      cfg.lr_posterior_mean = to_double(key, v);
    } else if (key == "lr_posterior_std") {
      cfg.lr_posterior_std = to_double(key, v);
    } else if (key == "m_generators") {
      cfg.m_generators = to_int(key, v);
    } else if (key == "reps") {
      cfg.reps = to_int(key, v);
    } else if (key == "cert_critic_steps") {
      cfg.cert_critic_steps = to_int(key, v);
    } else if (key == "cert_batch") {
      cfg.cert_batch = to_int(key, v);
    } else if (key == "lr_cert_critic") {
      cfg.lr_cert_critic = to_double(key, v);
    } else if (key == "cert_critic_data") {
      cfg.cert_critic_data = to_enum<trainer::CertCriticData>(
          key, v, {{"eval", trainer::CertCriticData::kEval}, {"prior", trainer::CertCriticData::kPrior}});
    } else if (key == "seed") {
      cfg.seed = to_unsigned(key, v);
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }

  if (!n0_given) cfg.n0 = cfg.n / 2;

  if (lambda_text == "sqrt_n") {
    cfg.lambda_rule = bounds::SqrtN{};
  } else if (lambda_text == "n") {
    cfg.lambda_rule = bounds::LinearN{};
  } else if (lambda_text == "n_over_1024") {
    cfg.lambda_rule = bounds::NOver1024{};
  } else if (lambda_text == "optimal") {
    cfg.lambda_rule = bounds::Optimal{optimal_complexity, 1.0, cfg.delta};
  } else {
    const double fixed = to_double("lambda_rule", lambda_text);
    if (!(fixed > 0.0)) throw ConfigError("config: a numeric lambda_rule must be positive");
    cfg.lambda_rule = bounds::Fixed{fixed};
  }
  cfg.validate();
  if (auto* opt = std::get_if<bounds::Optimal>(&cfg.lambda_rule)) {
    try {
      opt->diameter = synthdata::diameter(trainer::dataset_spec(cfg));
    } catch (const Error& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
    if (opt->complexity + std::log(1.0 / opt->delta) <= 0.0) {
      throw ConfigError("config: lambda_rule=optimal needs optimal_complexity + log(1/delta) > 0");
    }
  }
  return cfg;
}

inline trainer::TrainConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace pacgen::config
